"""AR(2) interevent-time regression with first-order zone/action transition PMFs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .features import N_ACTIONS, N_ZONES, WindowSet
from .model import ForecastOutput
from .train import LossBreakdown, loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AR2Model:
    intercept: float
    phi1: float
    phi2: float

    def predict(self, t_prev1, t_prev2):
        return self.intercept + self.phi1 * np.asarray(t_prev1) + self.phi2 * np.asarray(t_prev2)


def ar2_design(series: list) -> tuple[np.ndarray, np.ndarray]:
    """Stack (1, t[i-1], t[i-2]) -> t[i] rows, never crossing series boundaries."""
    X, y = [], []
    for s in series:
        s = np.asarray(s, dtype=np.float64)
        if len(s) < 3:
            continue
        X.append(np.column_stack([np.ones(len(s) - 2), s[1:-1], s[:-2]]))
        y.append(s[2:])
    if not X:
        return np.zeros((0, 3)), np.zeros(0)
    return np.vstack(X), np.concatenate(y)


def fit_ar2(series: list) -> AR2Model:
    """Ordinary least squares of t[i] on (1, t[i-1], t[i-2]) pooled over matches."""
    X, y = ar2_design(series)
    if len(y) < 3:
        raise ValueError(f"need at least 3 triplets, got {len(y)}")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3:
        # a rank-deficient design that is still fit exactly (e.g. a constant
        # series) keeps the minimum-norm solution; anything else is an error
        if not np.allclose(X @ coef, y, rtol=0, atol=1e-9 * max(1.0, np.abs(y).max())):
            raise np.linalg.LinAlgError("singular AR(2) design matrix")
        log.warning("rank-deficient AR(2) design; using the minimum-norm fit")
    return AR2Model(*map(float, coef))


@dataclass(frozen=True)
class TransitionMatrix:
    probs: np.ndarray  # (K, K); row i is P(next | current = i + 1)
    alpha: float

    def row(self, state):
        return self.probs[np.asarray(state) - 1]


def fit_transitions(sequences: list, k: int, alpha: float = 1.0) -> TransitionMatrix:
    """Smoothed first-order transition PMF; class ids are 1..k."""
    counts = np.zeros((k, k))
    for seq in sequences:
        seq = np.asarray(seq, dtype=np.int64)
        if len(seq) and (seq.min() < 1 or seq.max() > k):
            raise ValueError(f"class ids must lie in 1..{k}")
        np.add.at(counts, (seq[:-1] - 1, seq[1:] - 1), 1.0)
    totals = counts.sum(axis=1, keepdims=True) + alpha * k
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = (counts + alpha) / totals
    # alpha = 0 with an unseen state: fall back to uniform
    probs[~np.isfinite(probs).all(axis=1)] = 1.0 / k
    return TransitionMatrix(probs, alpha)


@dataclass
class Baseline:
    ar2: AR2Model
    zones: TransitionMatrix
    actions: TransitionMatrix

    def forecast(self, windows: WindowSet) -> ForecastOutput:
        """Forecast from the last two history rows; logits are log-PMFs."""
        h = windows.history
        t_hat = self.ar2.predict(h[:, -1, 0], h[:, -2, 0] if h.shape[1] > 1 else h[:, -1, 0])
        zl = self.zones.row(h[:, -1, 1].round().astype(int))
        ml = self.actions.row(h[:, -1, 2].round().astype(int))
        with np.errstate(divide="ignore"):
            return ForecastOutput(
                torch.as_tensor(t_hat, dtype=torch.float64),
                torch.as_tensor(np.log(zl)),
                torch.as_tensor(np.log(ml)),
            )

    def to_json(self) -> dict:
        return {
            "ar2": {"intercept": self.ar2.intercept, "phi1": self.ar2.phi1, "phi2": self.ar2.phi2},
            "zone_transitions": {"alpha": self.zones.alpha, "probs": self.zones.probs.tolist()},
            "action_transitions": {"alpha": self.actions.alpha, "probs": self.actions.probs.tolist()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Baseline":
        return cls(
            AR2Model(**obj["ar2"]),
            TransitionMatrix(np.array(obj["zone_transitions"]["probs"]), obj["zone_transitions"]["alpha"]),
            TransitionMatrix(np.array(obj["action_transitions"]["probs"]), obj["action_transitions"]["alpha"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Baseline":
        return cls.from_json(json.loads(Path(path).read_text()))


def fit_baseline(matches, t_scale: float, alpha: float = 1.0) -> Baseline:
    """Fit all three components on processed events grouped by match."""
    return Baseline(
        fit_ar2([[e.t * t_scale for e in m] for m in matches]),
        fit_transitions([[e.zone for e in m] for m in matches], N_ZONES, alpha),
        fit_transitions([[int(e.action) for e in m] for m in matches], N_ACTIONS, alpha),
    )


def evaluate_baseline(model: Baseline, windows: WindowSet, weights=None, time_weight: float = 10.0) -> LossBreakdown:
    out = model.forecast(windows)
    return loss(out, windows.target_t, windows.target_zone, windows.target_action, weights, time_weight)
