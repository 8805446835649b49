"""Pipeline steps shared by the CLI subcommands and ``all``."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .artifacts import Provenance, read_csv, staged, write_csv, write_json
from .baselines import Baseline, fit_baseline
from .features import (
    ACTION_NAMES,
    Action,
    ClassWeights,
    N_ZONES,
    ZoneMap,
    build_windows,
    group_by_match,
    possessions_from_rows,
    process_match,
    read_processed,
    write_processed,
)
from .ingest import SPLITS, SplitManifest, drop_own_goal_matches, match_key, parse_events, split_matches
from .metrics import (
    CORRELATION_COLUMNS,
    EventForecast,
    correlation_matrix,
    empirical_forecast,
    match_timeline,
    read_team_table,
    score_possessions,
    team_season_aggregate,
)
from .model import NMSTPP, ModelConfig, load_checkpoint, predict_distribution, save_checkpoint
from .report import evaluate, write_evaluation
from .train import GridSpec, TrainConfig, grid_search, predict, train

log = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


@dataclass
class Dataset:
    manifest: SplitManifest
    zone_map: ZoneMap
    t_scale: float
    splits: dict[str, list]

    def matches(self, split: str):
        return group_by_match(self.splits[split])

    def windows(self, split: str, seqlen: int):
        return build_windows(self.matches(split), seqlen, self.t_scale)


def prep(input_path, fmt: str, seed: int, train_rows, valid_rows, out_dir, prov: Provenance, zone_map_path=None) -> Dataset:
    """Parse, filter, split, process and write ``manifest.json`` plus one CSV per split."""
    out = Path(out_dir)
    zone_map = ZoneMap.load(zone_map_path) if zone_map_path else ZoneMap.default()
    parsed = parse_events(Path(input_path).read_bytes(), fmt)
    streams = drop_own_goal_matches(parsed.streams)
    log.info("parsed %d matches, %d kept after own-goal filter", len(parsed.streams), len(streams))
    manifest = split_matches(streams, seed, train_rows, valid_rows)
    by_key = {match_key(s): s for s in streams}
    caps = {"train": train_rows, "valid": valid_rows, "test": None}
    splits = {}
    for split in SPLITS:
        rows = [ev for key in manifest.matches(split) for ev in process_match(by_key[key], zone_map)]
        if caps[split] is not None:
            rows = rows[: caps[split]]
        splits[split] = rows
    t_max = max((e.t for e in splits["train"]), default=0.0)
    if t_max <= 0:
        raise ValueError("training split has no positive interevent time")
    t_scale = 1.0 / t_max
    for split, rows in splits.items():
        with staged(out / f"{split}.csv") as fh:
            fh.write(prov.line + "\n")
            write_processed(rows, fh)
    write_json(out / "zone_map.json", zone_map.to_json(), prov)
    write_json(
        out / "manifest.json",
        {
            **manifest.to_json(),
            "t_scale": t_scale,
            "clamped_coordinates": parsed.clamped,
            "dropped_matches": len(parsed.streams) - len(streams),
            "rows": {s: len(r) for s, r in splits.items()},
            "zone_map_digest": zone_map.digest(),
        },
        prov,
    )
    return Dataset(manifest, zone_map, t_scale, splits)


def load_dataset(data_dir) -> Dataset:
    d = Path(data_dir)
    meta = json.loads((d / "manifest.json").read_text())
    zm = json.loads((d / "zone_map.json").read_text())
    zm.pop("provenance", None)
    splits = {}
    for split in SPLITS:
        with open(d / f"{split}.csv", newline="") as fh:
            splits[split] = read_processed(fh)
    return Dataset(SplitManifest.from_json(meta), ZoneMap.from_json(zm), meta["t_scale"], splits)


def class_weights_for(windows, cfg: TrainConfig) -> ClassWeights | None:
    if not cfg.class_weighting:
        return None
    return ClassWeights.from_targets(windows.target_zone, windows.target_action, cfg.dribble_multiplier)


HISTORY_HEADER = (
    "epoch",
    "train_total",
    "train_rmse_t",
    "train_cel_zone",
    "train_cel_action",
    "valid_total",
    "valid_rmse_t",
    "valid_cel_zone",
    "valid_cel_action",
)


def run_train(data: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig, ckpt_path, prov: Provenance):
    tr = data.windows("train", model_cfg.seqlen)
    va = data.windows("valid", model_cfg.seqlen)
    weights = class_weights_for(tr, train_cfg)
    seed_everything(train_cfg.seed)
    model = NMSTPP(model_cfg)
    result = train(model, tr, train_cfg, va if len(va) else None, weights)
    ckpt_path = Path(ckpt_path)
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    with staged(ckpt_path, "wb") as fh:
        save_checkpoint(
            fh,
            model,
            data.t_scale,
            data.zone_map.digest(),
            weights=asdict(weights) if weights else None,
            time_weight=train_cfg.time_weight,
            best_epoch=result.best_epoch,
            provenance=prov.config_digest,
        )
    rows = []
    for rec in result.history:
        row = rec.as_row()
        rows.append({h: row.get(h, "") for h in HISTORY_HEADER})
    write_csv(ckpt_path.with_name("history.csv"), HISTORY_HEADER, rows, prov)
    return model, result


def run_baseline(data: Dataset, alpha: float, out_json, prov: Provenance) -> Baseline:
    model = fit_baseline(data.matches("train"), data.t_scale, alpha)
    write_json(out_json, model.to_json(), prov)
    return model


def load_baseline(path) -> Baseline:
    obj = json.loads(Path(path).read_text())
    obj.pop("provenance", None)
    return Baseline.from_json(obj)


def run_gridsearch(data: Dataset, grid: GridSpec, train_cfg: TrainConfig, base: ModelConfig, budget, out_csv, prov):
    rows = grid_search(
        grid,
        data.matches("train"),
        data.matches("valid"),
        data.t_scale,
        train_cfg,
        base,
        budget,
        weights_fn=lambda w: class_weights_for(w, train_cfg),
    )
    from .train import GRID_COLUMNS

    write_csv(out_csv, GRID_COLUMNS, rows, prov)
    return rows


def load_grid(path) -> GridSpec:
    from .config import tomllib

    path = Path(path)
    text = path.read_text()
    obj = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    return GridSpec(**obj.get("grid", obj))


PRED_HEADER = (
    "match_id",
    "event_index",
    "t_hat_seconds",
    *(f"p_zone_{z}" for z in range(1, N_ZONES + 1)),
    *(f"p_{ACTION_NAMES[a]}" for a in Action),
)


def _weights_from(blob) -> ClassWeights | None:
    if not blob:
        return None
    return ClassWeights(tuple(blob["zone"]), tuple(blob["action"]), blob.get("dribble_multiplier", 1.0))


def run_eval(data: Dataset, ckpt_path, split: str, out_dir, prov: Provenance, baseline_path=None, attention_sample=None, plots=True):
    """Evaluate a checkpoint (and optionally the baseline) on one split."""
    ckpt = load_checkpoint(ckpt_path, zone_map_digest=data.zone_map.digest())
    model = ckpt.build()
    weights = _weights_from(ckpt.extra.get("weights"))
    time_weight = ckpt.extra.get("time_weight", 10.0)
    windows = build_windows(data.matches(split), ckpt.config.seqlen, ckpt.t_scale)
    out = Path(out_dir)
    ev = evaluate(model, windows, weights, time_weight, attention_sample)
    write_evaluation(ev, out, prov, "nmstpp", split, plots)
    results = {"nmstpp": ev}
    if baseline_path:
        bev = evaluate(load_baseline(baseline_path), windows, weights, time_weight)
        write_evaluation(bev, out / "baseline", prov, "ar2_trans_prob", split, plots)
        results["baseline"] = bev
    write_predictions(model, windows, ckpt.t_scale, out / f"predictions_{split}.csv", prov)
    return results


def write_predictions(model: NMSTPP, windows, t_scale: float, path, prov: Provenance) -> None:
    out, _ = predict(model, windows)
    t_hat, zp, mp = predict_distribution(out)
    rows = (
        (mid, int(idx), float(t) / t_scale, *map(float, z), *map(float, m))
        for mid, idx, t, z, m in zip(windows.match_ids, windows.target_index, t_hat, zp, mp)
    )
    write_csv(path, PRED_HEADER, rows, prov)


def read_predictions(path) -> dict[tuple[str, int], EventForecast]:
    out = {}
    for r in read_csv(path):
        out[(r["match_id"], int(r["event_index"]))] = EventForecast(
            max(float(r["t_hat_seconds"]), 0.0),
            np.array([float(r[f"p_zone_{z}"]) for z in range(1, N_ZONES + 1)]),
            np.array([float(r[f"p_{ACTION_NAMES[a]}"]) for a in Action]),
        )
    return out


POSSESSION_HEADER = ("possession_id", "match_id", "team", "period", "end_seconds", "n_events", "has", "hpus", "hpus_plus", "attacking", "poss_util_raw", "poss_util")
TEAM_HEADER = ("team", "ranking", "matches", "avg_goal", "avg_xg", "avg_hpus", "avg_hpus_plus", "hpus_ratio")


def run_metrics(events, mode: str, out_dir, prov: Provenance, predictions=None, teams_path=None, decay=0.3, zone_map=None):
    """Score possessions and write possessions/teams/correlations/timeline CSVs.

    ``events`` is a list of processed rows. In predicted mode an event's HAS
    uses the model forecast for that event; events with no forecast (the
    first ``seqlen`` of each match) are left out.
    """
    out = Path(out_dir)
    index_of = {}
    for mid, rows in ((m[0].match_id, m) for m in group_by_match(events)):
        for i, ev in enumerate(rows):
            index_of[id(ev)] = (mid, i)
    if mode == "predicted":
        if predictions is None:
            raise ValueError("predicted mode needs a predictions file")
        forecasts = lambda ev: predictions.get(index_of[id(ev)])  # noqa: E731
    elif mode == "empirical":
        forecasts = empirical_forecast
    else:
        raise ValueError(f"unknown metrics mode {mode!r}")
    scores = score_possessions(possessions_from_rows(events), forecasts, zone_map, decay)
    write_csv(
        out / "possessions.csv",
        POSSESSION_HEADER,
        (
            (
                s.possession_id,
                s.match_id,
                s.team_id,
                s.period,
                s.end_seconds,
                len(s.records),
                ";".join(f"{r.has:.6f}" for r in s.records),
                s.hpus,
                "" if s.hpus_plus is None else s.hpus_plus,
                int(s.attacking),
                s.poss_util_raw,
                s.poss_util,
            )
            for s in scores
        ),
        prov,
    )
    goals = {}
    for ev in events:
        if ev.is_goal:
            goals.setdefault(ev.match_id, []).append((ev.team_id, ev.period, ev.event_seconds))
    for mid in sorted({s.match_id for s in scores}):
        ms = [s for s in scores if s.match_id == mid]
        teams = sorted({s.team_id for s in ms})
        tl = match_timeline(ms, teams, goals=goals.get(mid, ()))
        rows = [
            (b, team, tl.hpus[team][i], tl.hpus_plus[team][i], int(tl.goals[team][i]))
            for team in teams
            for i, b in enumerate(tl.bins)
        ]
        write_csv(out / f"timeline_{mid}.csv", ("minute", "team", "cum_hpus", "cum_hpus_plus", "goals"), rows, prov)
    stats = None
    if teams_path:
        stats = team_season_aggregate(scores, read_team_table(teams_path))
        write_csv(
            out / "teams.csv",
            TEAM_HEADER,
            ((s.team, s.ranking, s.matches, s.avg_goal, s.avg_xg, s.avg_hpus, s.avg_hpus_plus, s.hpus_ratio) for s in stats),
            prov,
        )
        corr = correlation_matrix(stats)
        write_csv(out / "correlations.csv", ("", *CORRELATION_COLUMNS), ((c, *row) for c, row in zip(CORRELATION_COLUMNS, corr)), prov)
    return scores, stats
