"""Desk-scale experiments backing the acceptance suite and scripts/."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .baselines import evaluate_baseline, fit_baseline
from .features import ClassWeights, build_windows, process_match
from .ingest import drop_own_goal_matches, match_key, parse_events, split_matches
from .model import NMSTPP, ModelConfig
from .report import cdf_compare
from .synthetic import SynthConfig, exponential_stream, generate_events, to_jsonl
from .train import LossBreakdown, TrainConfig, TrainResult, predict, train


@dataclass
class DeskScaleResult:
    train_windows: int
    valid_windows: int
    baseline: LossBreakdown
    model: LossBreakdown
    result: TrainResult
    seconds: float

    @property
    def improvement(self) -> float:
        """Relative reduction of validation total loss versus the baseline."""
        return 1.0 - self.model.total / self.baseline.total


def desk_scale(matches: int = 24, epochs: int = 20, seed: int = 1, model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None) -> DeskScaleResult:
    """Train NMSTPP and the AR(2)/transition baseline on synthetic matches and
    compare validation losses under the same class weights."""
    torch.manual_seed(seed)
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig(epochs=epochs, seed=seed)
    events = generate_events(SynthConfig(matches=matches, events_per_half=160, seed=seed))
    streams = drop_own_goal_matches(parse_events(to_jsonl(events)).streams)
    manifest = split_matches(streams, seed)
    processed = {match_key(s): process_match(s) for s in streams}
    tr = [processed[k] for k in manifest.matches("train")]
    va = [processed[k] for k in manifest.matches("valid")]
    t_scale = 1.0 / max(e.t for m in tr for e in m)
    W = build_windows(tr, model_cfg.seqlen, t_scale)
    V = build_windows(va, model_cfg.seqlen, t_scale)
    weights = ClassWeights.from_targets(W.target_zone, W.target_action, train_cfg.dribble_multiplier)
    base = evaluate_baseline(fit_baseline(tr, t_scale), V, weights, train_cfg.time_weight)
    t0 = time.perf_counter()
    result = train(NMSTPP(model_cfg), W, train_cfg, V, weights)
    return DeskScaleResult(len(W), len(V), base, result.best.valid, result, time.perf_counter() - t0)


@dataclass
class CdfResult:
    ks: float
    predicted_quantiles: np.ndarray
    true_quantiles: np.ndarray


def exponential_cdf(n_events: int = 10_000, rate: float = 0.2, epochs: int = 15, seed: int = 0) -> CdfResult:
    """Fit on iid Exp(rate) interevent times, report KS of predicted vs true
    interevent times on the held-out last 20%."""
    torch.manual_seed(seed)
    events, t_max = exponential_stream(n_events, rate, seed)
    cut = int(0.8 * n_events)
    cfg = ModelConfig(seqlen=10, dim_feedforward=64)
    W = build_windows([events[:cut]], cfg.seqlen, 1.0 / t_max)
    T = build_windows([events[cut:]], cfg.seqlen, 1.0 / t_max)
    model = NMSTPP(cfg)
    train(model, W, TrainConfig(epochs=epochs, seed=seed), T)
    out, _ = predict(model, T)
    pred = np.maximum(out.t_hat.double().numpy(), 0.0)
    cmp = cdf_compare(pred, T.target_t)
    q = [5, 25, 50, 75, 95]
    return CdfResult(cmp.ks, np.percentile(pred, q), np.percentile(T.target_t, q))


def overfit(n_windows: int = 32, epochs: int = 500, lr: float = 1e-3, seed: int = 0) -> TrainResult:
    """Train on a handful of synthetic windows; the loss should collapse."""
    torch.manual_seed(seed)
    events = generate_events(SynthConfig(matches=1, events_per_half=60, seed=seed))
    streams = parse_events(to_jsonl(events)).streams
    cfg = ModelConfig(seqlen=10)
    rows = process_match(streams[0])
    W = build_windows([rows], cfg.seqlen, 1.0 / max(e.t for e in rows)).subset(np.arange(n_windows))
    # 32 windows rarely cover all 20 zones, so class weights are left uniform
    return train(NMSTPP(cfg), W, TrainConfig(epochs=epochs, lr=lr, batch_size=n_windows, seed=seed, patience=epochs))
