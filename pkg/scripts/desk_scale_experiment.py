"""NMSTPP versus the AR(2) + transition-probability baseline on synthetic matches.

    python scripts/desk_scale_experiment.py --matches 24 --epochs 20
"""

import argparse

import torch

from nmstpp.experiments import desk_scale


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--matches", type=int, default=24)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)

    r = desk_scale(args.matches, args.epochs, args.seed)
    print(f"windows: train {r.train_windows}, valid {r.valid_windows}")
    print(f"{'model':<16}{'total':>9}{'rmse_t':>9}{'cel_zone':>10}{'cel_action':>11}")
    for name, lb in (("ar2_trans_prob", r.baseline), ("nmstpp", r.model)):
        print(f"{name:<16}{lb.total:9.4f}{lb.rmse_t:9.4f}{lb.cel_zone:10.4f}{lb.cel_action:11.4f}")
    print(f"best epoch {r.result.best_epoch}, improvement {r.improvement:.1%}, {r.seconds:.0f}s training")


if __name__ == "__main__":
    main()
