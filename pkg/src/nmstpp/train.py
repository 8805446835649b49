"""Composite loss, Adam training loop and hyperparameter grid search."""

from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import torch
import torch.nn.functional as F

from .features import ClassWeights, WindowSet, build_windows
from .model import NMSTPP, ORDERS, ForecastOutput, ModelConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    rmse_t: float
    cel_zone: float
    cel_action: float

    def as_row(self, prefix: str = "") -> dict:
        return {f"{prefix}{k}": v for k, v in asdict(self).items()}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 10
    time_weight: float = 10.0
    class_weighting: bool = True
    dribble_multiplier: float = 1.16

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, detail: str = "non-finite loss"):
        super().__init__(f"{detail} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


def weight_tensors(weights: ClassWeights | None, dtype=torch.float32):
    if weights is None:
        return None, None
    return (
        torch.tensor(weights.zone, dtype=dtype),
        torch.tensor(weights.action, dtype=dtype),
    )


def loss_terms(
    out: ForecastOutput,
    target_t: torch.Tensor,
    target_zone: torch.Tensor,
    target_action: torch.Tensor,
    weights: ClassWeights | None = None,
    time_weight: float = 10.0,
):
    """Return (total, rmse_t, cel_zone, cel_action) as tensors.

    Targets hold 1-indexed class ids. Cross-entropies are class-weighted means,
    normalized by the summed weights of the true classes.
    """
    if target_t.numel() == 0:
        raise ValueError("empty batch")
    wz, wm = weight_tensors(weights, out.z_logits.dtype)
    rmse = torch.sqrt(torch.mean((out.t_hat - target_t) ** 2))
    cel_z = F.cross_entropy(out.z_logits, target_zone - 1, weight=wz)
    cel_m = F.cross_entropy(out.m_logits, target_action - 1, weight=wm)
    return time_weight * rmse + cel_z + cel_m, rmse, cel_z, cel_m


def loss(out: ForecastOutput, target_t, target_zone, target_action, weights=None, time_weight=10.0) -> LossBreakdown:
    tt = torch.as_tensor(np.asarray(target_t), dtype=out.t_hat.dtype)
    tz = torch.as_tensor(np.asarray(target_zone), dtype=torch.long)
    tm = torch.as_tensor(np.asarray(target_action), dtype=torch.long)
    with torch.no_grad():
        _, rmse, cz, cm = loss_terms(out, tt, tz, tm, weights, time_weight)
    rmse, cz, cm = float(rmse), float(cz), float(cm)
    return LossBreakdown(time_weight * rmse + cz + cm, rmse, cz, cm)


def _tensors(windows: WindowSet, dtype=torch.float32):
    return (
        torch.as_tensor(windows.history, dtype=dtype),
        torch.as_tensor(windows.target_t, dtype=dtype),
        torch.as_tensor(windows.target_zone, dtype=torch.long),
        torch.as_tensor(windows.target_action, dtype=torch.long),
    )


@torch.no_grad()
def predict(model: NMSTPP, windows: WindowSet, batch_size: int = 1024) -> tuple[ForecastOutput, torch.Tensor]:
    """Forward all windows in eval mode; returns concatenated outputs and attention."""
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    hist = torch.as_tensor(windows.history, dtype=dtype)
    outs, attns = [], []
    for i in range(0, len(hist), batch_size):
        o, a = model(hist[i : i + batch_size])
        outs.append(o)
        attns.append(a)
    model.train(was_training)
    if not outs:
        raise ValueError("no windows to predict")
    return ForecastOutput(*(torch.cat(parts) for parts in zip(*outs))), torch.cat(attns)


def evaluate_windows(model: NMSTPP, windows: WindowSet, weights=None, time_weight=10.0) -> LossBreakdown:
    out, _ = predict(model, windows)
    return loss(out, windows.target_t, windows.target_zone, windows.target_action, weights, time_weight)


@dataclass
class EpochRecord:
    epoch: int
    train: LossBreakdown
    valid: LossBreakdown | None = None

    def as_row(self) -> dict:
        row = {"epoch": self.epoch, **self.train.as_row("train_")}
        if self.valid is not None:
            row.update(self.valid.as_row("valid_"))
        return row


@dataclass
class TrainResult:
    model: NMSTPP
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self) -> EpochRecord:
        return self.history[self.best_epoch]


def train(
    model: NMSTPP,
    train_windows: WindowSet,
    cfg: TrainConfig,
    valid_windows: WindowSet | None = None,
    weights: ClassWeights | None = None,
) -> TrainResult:
    """Adam over seeded shuffled mini-batches with early stopping.

    ``history[0]`` is the untrained model. The returned model carries the
    parameters of the epoch with the lowest validation total (training total
    when no validation set is given).
    """
    if len(train_windows) == 0:
        raise ValueError("no training windows")
    dtype = next(model.parameters()).dtype
    hist, tt, tz, tm = _tensors(train_windows, dtype)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)

    def record(epoch: int) -> EpochRecord:
        tr = evaluate_windows(model, train_windows, weights, cfg.time_weight)
        va = evaluate_windows(model, valid_windows, weights, cfg.time_weight) if valid_windows else None
        rec = EpochRecord(epoch, tr, va)
        if not math.isfinite((va or tr).total):
            raise TrainingDiverged(epoch, -1, "non-finite evaluation loss")
        return rec

    result = TrainResult(model, [record(0)])
    best_state = copy.deepcopy(model.state_dict())
    best_score = (result.history[0].valid or result.history[0].train).total
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        perm = torch.randperm(len(hist), generator=gen)
        for b, start in enumerate(range(0, len(perm), cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            out, _ = model(hist[idx])
            total, *_ = loss_terms(out, tt[idx], tz[idx], tm[idx], weights, cfg.time_weight)
            if not torch.isfinite(total):
                raise TrainingDiverged(epoch, b)
            opt.zero_grad()
            total.backward()
            opt.step()
        rec = record(epoch)
        result.history.append(rec)
        score = (rec.valid or rec.train).total
        log.info("epoch %d train %.4f valid %s", epoch, rec.train.total, rec.valid and f"{rec.valid.total:.4f}")
        if score < best_score:
            best_score, result.best_epoch, stale = score, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return result


@dataclass
class GridSpec:
    """Candidate values per hyperparameter; the cartesian product is searched."""

    seqlen: list[int] = field(default_factory=lambda: [40])
    dim_feedforward: list[int] = field(default_factory=lambda: [1024])
    order: list[tuple[str, str, str]] = field(default_factory=lambda: [("t", "z", "m")])
    num_layers_t: list[int] = field(default_factory=lambda: [1])
    num_layers_z: list[int] = field(default_factory=lambda: [1])
    num_layers_m: list[int] = field(default_factory=lambda: [2])
    activation: list[str] = field(default_factory=lambda: ["none"])
    dropout: list[float] = field(default_factory=lambda: [0.0])

    def __post_init__(self):
        self.order = [tuple(o) for o in self.order]
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"grid for {f.name} is empty")

    @classmethod
    def published(cls) -> "GridSpec":
        """The full search space used for the published model."""
        return cls(
            seqlen=[1, 10, 40, 100],
            dim_feedforward=[2**i for i in range(15)],
            order=list(ORDERS),
            num_layers_t=[1, 2, 4, 8, 16],
            num_layers_z=[1, 2, 4, 8, 16],
            num_layers_m=[1, 2, 4, 8, 16],
            activation=["none", "relu", "sigmoid", "tanh"],
            dropout=[0.0, 0.1, 0.2, 0.5],
        )

    def configs(self, base: ModelConfig | None = None):
        base = base or ModelConfig()
        names = [f.name for f in fields(self)]
        for values in itertools.product(*(getattr(self, n) for n in names)):
            yield replace(base, **dict(zip(names, values)))


GRID_COLUMNS = (
    "rank",
    "seqlen",
    "dim_feedforward",
    "order",
    "num_layers_t",
    "num_layers_z",
    "num_layers_m",
    "activation",
    "dropout",
    "parameters",
    "valid_total",
    "valid_rmse_t",
    "valid_cel_zone",
    "valid_cel_action",
    "error",
)


def grid_search(
    grid: GridSpec,
    train_matches,
    valid_matches,
    t_scale: float,
    train_cfg: TrainConfig,
    base: ModelConfig | None = None,
    budget_epochs: int | None = None,
    weights_fn=None,
) -> list[dict]:
    """Train one model per grid point and rank by validation total loss.

    ``weights_fn(train_windows)`` supplies class weights (uniform if omitted).
    A cell that raises is kept with its error message and ranked last.
    """
    if budget_epochs:
        train_cfg = replace(train_cfg, epochs=budget_epochs)
    windows: dict[int, tuple[WindowSet, WindowSet]] = {}
    rows = []
    for cfg in grid.configs(base):
        row = {k: getattr(cfg, k) for k in GRID_COLUMNS[1:9]}
        row["order"] = "/".join(cfg.order)
        try:
            if cfg.seqlen not in windows:
                windows[cfg.seqlen] = (
                    build_windows(train_matches, cfg.seqlen, t_scale),
                    build_windows(valid_matches, cfg.seqlen, t_scale),
                )
            tr, va = windows[cfg.seqlen]
            weights = weights_fn(tr) if weights_fn else None
            torch.manual_seed(train_cfg.seed)
            model = NMSTPP(cfg)
            row["parameters"] = sum(p.numel() for p in model.parameters())
            result = train(model, tr, train_cfg, va if len(va) else None, weights)
            best = result.best.valid or result.best.train
            row.update(best.as_row("valid_"))
            row["error"] = ""
        except Exception as exc:  # a failed cell is recorded, not fatal
            log.warning("grid cell %s failed: %s", row, exc)
            row.update({"valid_total": math.inf, "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    rows.sort(key=lambda r: r["valid_total"])
    for i, r in enumerate(rows, start=1):
        r["rank"] = i
    return [{c: r.get(c, "") for c in GRID_COLUMNS} for r in rows]
