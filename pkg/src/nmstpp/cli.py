"""Command-line entry point: ``nmstpp <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .artifacts import Provenance, config_hash
from .config import PipelineConfig, load_config

log = logging.getLogger("nmstpp")


def _add_config(p, required=False):
    p.add_argument("--config", required=required, help="TOML or JSON pipeline config; flags override it")
    p.add_argument("--seed", type=int, help="override ingest and training seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmstpp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nmstpp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("prep", help="parse, filter and split raw events")
    _add_config(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=("jsonl", "csv"))
    p.add_argument("--train-rows", type=int)
    p.add_argument("--valid-rows", type=int)
    p.add_argument("--zone-map")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train an NMSTPP model")
    _add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("baseline", help="fit the AR(2) + transition-probability baseline")
    _add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="JSON model path")

    p = sub.add_parser("gridsearch", help="train one model per grid point")
    _add_config(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--budget-epochs", type=int)
    p.add_argument("--out", required=True, help="CSV table path")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _add_config(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--baseline", help="also evaluate this baseline JSON")
    p.add_argument("--sample", type=int, help="windows averaged for the attention heatmap")
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("metrics", help="HAS / HPUS / poss-util from forecasts or observed events")
    _add_config(p)
    p.add_argument("--events", required=True, nargs="+", help="processed split CSV(s)")
    p.add_argument("--predictions", nargs="*", default=[])
    p.add_argument("--mode", choices=("predicted", "empirical"))
    p.add_argument("--teams", help="CSV: team,ranking,goals_per_match,xg_per_match")
    p.add_argument("--decay", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="summary tables and figures for a run directory")
    _add_config(p)
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("all", help="prep, train, baseline, eval, metrics and report in sequence")
    _add_config(p, required=True)
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("synth", help="write a synthetic WyScout-style event file")
    p.add_argument("--matches", type=int, default=10)
    p.add_argument("--events-per-half", type=int, default=160)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--own-goal-matches", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _config(args) -> PipelineConfig:
    seed = getattr(args, "seed", None)
    overrides = {
        "ingest.seed": seed,
        "train.seed": seed,
        "ingest.input": getattr(args, "input", None),
        "ingest.format": getattr(args, "format", None),
        "ingest.train_rows": getattr(args, "train_rows", None),
        "ingest.valid_rows": getattr(args, "valid_rows", None),
        "ingest.zone_map": getattr(args, "zone_map", None),
        "train.epochs": getattr(args, "epochs", None),
        "metrics.mode": getattr(args, "mode", None),
        "metrics.teams": getattr(args, "teams", None),
        "metrics.decay": getattr(args, "decay", None),
    }
    cfg = load_config(getattr(args, "config", None), overrides)
    if args.command == "all" and args.out:
        cfg.out = args.out
    cfg.validate()
    return cfg


def run_all(cfg: PipelineConfig, prov: Provenance) -> Path:
    from . import pipeline as pl

    out = Path(cfg.out)
    data_dir = out / "data"
    if not cfg.ingest.input:
        raise ValueError("ingest.input is required")
    data = pl.prep(
        cfg.resolve(cfg.ingest.input),
        cfg.ingest.format,
        cfg.ingest.seed,
        cfg.ingest.train_rows,
        cfg.ingest.valid_rows,
        data_dir,
        prov,
        cfg.resolve(cfg.ingest.zone_map),
    )
    pl.run_train(data, cfg.model, cfg.train, out / "model" / "model.ckpt", prov)
    pl.run_baseline(data, cfg.baseline_alpha, out / "model" / "baseline.json", prov)
    events, predictions = [], {}
    for split in cfg.metrics.splits:
        pl.run_eval(
            data,
            out / "model" / "model.ckpt",
            split,
            out / "eval" / split,
            prov,
            out / "model" / "baseline.json",
            cfg.report.attention_sample,
            cfg.report.plots,
        )
        events.extend(data.splits[split])
        predictions.update(pl.read_predictions(out / "eval" / split / f"predictions_{split}.csv"))
    pl.run_metrics(
        events,
        cfg.metrics.mode,
        out / "metrics",
        prov,
        predictions,
        cfg.resolve(cfg.metrics.teams),
        cfg.metrics.decay,
        data.zone_map,
    )
    from .report import build_report

    build_report(out, out / "report", prov, cfg.report.plots, cfg.metrics.decay)
    return out


def dispatch(args) -> None:
    from . import pipeline as pl

    if args.command == "synth":
        from .synthetic import SynthConfig, generate_events, to_jsonl

        events = generate_events(
            SynthConfig(matches=args.matches, events_per_half=args.events_per_half, seed=args.seed, own_goal_matches=args.own_goal_matches)
        )
        Path(args.out).write_text(to_jsonl(events))
        return

    cfg = _config(args)
    prov = Provenance(cfg.digest() if getattr(args, "config", None) else config_hash(vars(args)))
    if args.command == "prep":
        if not cfg.ingest.input:
            raise ValueError("--input is required (or ingest.input in --config)")
        pl.prep(
            cfg.resolve(cfg.ingest.input) if args.config else cfg.ingest.input,
            cfg.ingest.format,
            cfg.ingest.seed,
            cfg.ingest.train_rows,
            cfg.ingest.valid_rows,
            args.out,
            prov,
            cfg.ingest.zone_map,
        )
    elif args.command == "train":
        pl.run_train(pl.load_dataset(args.data), cfg.model, cfg.train, args.out, prov)
    elif args.command == "baseline":
        pl.run_baseline(pl.load_dataset(args.data), cfg.baseline_alpha, args.out, prov)
    elif args.command == "gridsearch":
        pl.run_gridsearch(pl.load_dataset(args.data), pl.load_grid(args.grid), cfg.train, cfg.model, args.budget_epochs, args.out, prov)
    elif args.command == "eval":
        pl.run_eval(pl.load_dataset(args.data), args.ckpt, args.split, args.out, prov, args.baseline, args.sample, not args.no_plots)
    elif args.command == "metrics":
        from .features import read_processed

        events = []
        for path in args.events:
            with open(path, newline="") as fh:
                events.extend(read_processed(fh))
        predictions = {}
        for path in args.predictions:
            predictions.update(pl.read_predictions(path))
        pl.run_metrics(
            events,
            cfg.metrics.mode,
            args.out,
            prov,
            predictions if args.predictions else None,
            cfg.metrics.teams,
            cfg.metrics.decay,
        )
    elif args.command == "report":
        from .report import build_report

        build_report(args.run, args.out or Path(args.run) / "report", prov, not args.no_plots, cfg.metrics.decay)
    elif args.command == "all":
        run_all(cfg, prov)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        dispatch(args)
    except Exception as exc:
        if args.verbose:
            log.exception("failed")
        print(f"nmstpp {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
