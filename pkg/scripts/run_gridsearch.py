"""Hyperparameter grid search on a prepared data directory.

    nmstpp prep --input events.jsonl --out run/data
    python scripts/run_gridsearch.py --data run/data --grid scripts/grid_small.toml --budget-epochs 5

Use ``--published`` to search the full published space instead of a grid file
(slow: several hundred configurations).
"""

import argparse

from nmstpp.artifacts import Provenance, config_hash
from nmstpp.pipeline import load_dataset, load_grid, run_gridsearch
from nmstpp.train import GridSpec, TrainConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", required=True)
    ap.add_argument("--grid")
    ap.add_argument("--published", action="store_true")
    ap.add_argument("--budget-epochs", type=int, default=5)
    ap.add_argument("--out", default="grid.csv")
    args = ap.parse_args()
    if bool(args.grid) == args.published:
        ap.error("give exactly one of --grid or --published")

    grid = GridSpec.published() if args.published else load_grid(args.grid)
    rows = run_gridsearch(load_dataset(args.data), grid, TrainConfig(), None, args.budget_epochs, args.out, Provenance(config_hash(vars(args))))
    for r in rows[:5]:
        print(r["rank"], r["valid_total"], {k: r[k] for k in ("seqlen", "dim_feedforward", "order", "num_layers_m")})


if __name__ == "__main__":
    main()
