"""The NMSTPP network: event embedding, transformer history encoder and
cascaded forecasting heads for (interevent time, zone, action)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .features import N_ACTIONS, N_ZONES

HEAD_SIZES = {"t": 1, "z": N_ZONES, "m": N_ACTIONS}
ORDERS = (
    ("t", "z", "m"),
    ("t", "m", "z"),
    ("z", "t", "m"),
    ("z", "m", "t"),
    ("m", "t", "z"),
    ("m", "z", "t"),
)
ACTIVATIONS = ("none", "relu", "sigmoid", "tanh")

# Geometry columns arrive in pitch units / radians; they are brought to O(1)
# before the continuous dense layer.
GEOMETRY_SCALE = (100.0, 100.0, 100.0, 100.0, math.pi)
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    seqlen: int = 40
    zone_emb_dim: int = 16
    action_emb_dim: int = 8
    continuous_dense_dim: int = 7
    dim_feedforward: int = 1024
    history_dim: int = 31
    order: tuple[str, str, str] = ("t", "z", "m")
    num_layers_t: int = 1
    num_layers_z: int = 1
    num_layers_m: int = 2
    hidden_dim: int | None = None
    activation: str = "none"
    dropout: float = 0.0
    dependent: bool = True
    n_encoder_layers: int = 1
    n_heads: int = 1

    def __post_init__(self):
        self.order = tuple(self.order)
        if self.order not in ORDERS:
            raise ValueError(f"order must be a permutation of (t, z, m), got {self.order}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_heads != 1:
            raise ValueError("only single-head attention is supported")
        if self.seqlen < 1:
            raise ValueError("seqlen must be >= 1")

    @property
    def d_model(self) -> int:
        return self.zone_emb_dim + self.action_emb_dim + self.continuous_dense_dim

    @property
    def head_hidden(self) -> int:
        return self.hidden_dim or self.history_dim

    def num_layers(self, head: str) -> int:
        return {"t": self.num_layers_t, "z": self.num_layers_z, "m": self.num_layers_m}[head]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["order"] = list(self.order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def positional_encoding(seqlen: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: Z[n, 2k] = sin(n / 10000^(2k/d)), Z[n, 2k+1] = cos(...).

    An odd ``d_model`` drops the trailing cos column.
    """
    n = np.arange(seqlen, dtype=np.float64)[:, None]
    div = 10000.0 ** (np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    z = np.empty((seqlen, d_model))
    z[:, 0::2] = np.sin(n / div)
    z[:, 1::2] = np.cos(n / div[: d_model // 2])
    return z


def positional_encode(x: np.ndarray) -> np.ndarray:
    """Add the sinusoidal table to a (seqlen, d_model) matrix."""
    x = np.asarray(x, dtype=np.float64)
    return x + positional_encoding(*x.shape[-2:])


def _activation(name: str) -> nn.Module:
    return {"none": nn.Identity, "relu": nn.ReLU, "sigmoid": nn.Sigmoid, "tanh": nn.Tanh}[name]()


class EventEmbedding(nn.Module):
    """Dense layer on (t, geometry) concatenated with zone and action embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.dense = nn.Linear(1 + len(GEOMETRY_SCALE), cfg.continuous_dense_dim)
        self.zone = nn.Embedding(N_ZONES, cfg.zone_emb_dim)
        self.action = nn.Embedding(N_ACTIONS, cfg.action_emb_dim)
        self.register_buffer("geo_scale", torch.tensor(GEOMETRY_SCALE), persistent=False)

    def forward(self, history: torch.Tensor) -> torch.Tensor:
        zones = history[..., 1].round().long()
        actions = history[..., 2].round().long()
        if zones.numel() and (zones.min() < 1 or zones.max() > N_ZONES):
            raise ValueError("zone id out of range 1..20")
        if actions.numel() and (actions.min() < 1 or actions.max() > N_ACTIONS):
            raise ValueError("action id out of range 1..5")
        cont = torch.cat([history[..., :1], history[..., 3:] / self.geo_scale.to(history.dtype)], dim=-1)
        return torch.cat([self.dense(cont), self.zone(zones - 1), self.action(actions - 1)], dim=-1)


class EncoderLayer(nn.Module):
    """Post-norm single-head self-attention block that also returns its weights."""

    def __init__(self, d_model: int, dim_feedforward: int, dropout: float):
        super().__init__()
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(
            nn.Linear(d_model, dim_feedforward),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(dim_feedforward, d_model),
        )
        self.drop1 = nn.Dropout(dropout)
        self.drop2 = nn.Dropout(dropout)
        self.scale = 1.0 / math.sqrt(d_model)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        q, k, v = self.q(x), self.k(x), self.v(x)
        attn = torch.softmax(q @ k.transpose(-2, -1) * self.scale, dim=-1)
        x = self.norm1(x + self.drop1(self.out(attn @ v)))
        x = self.norm2(x + self.drop2(self.ff(x)))
        return x, attn


def _mlp(n_in: int, n_out: int, hidden: int, n_hidden: int, activation: str, dropout: float) -> nn.Sequential:
    layers: list[nn.Module] = []
    width = n_in
    for _ in range(n_hidden):
        layers += [nn.Linear(width, hidden), _activation(activation)]
        if dropout:
            layers.append(nn.Dropout(dropout))
        width = hidden
    layers.append(nn.Linear(width, n_out))
    return nn.Sequential(*layers)


class ForecastOutput(NamedTuple):
    t_hat: torch.Tensor  # (B,) scaled interevent time
    z_logits: torch.Tensor  # (B, 20)
    m_logits: torch.Tensor  # (B, 5)


class NMSTPP(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or ModelConfig()
        d = cfg.d_model
        self.embed = EventEmbedding(cfg)
        self.register_buffer(
            "pe", torch.tensor(positional_encoding(cfg.seqlen, d), dtype=torch.float32), persistent=False
        )
        self.layers = nn.ModuleList(
            EncoderLayer(d, cfg.dim_feedforward, cfg.dropout) for _ in range(cfg.n_encoder_layers)
        )
        self.post = nn.Linear(d, cfg.history_dim)
        self.heads = nn.ModuleDict()
        seen = 0
        for name in cfg.order:
            n_in = cfg.history_dim + (seen if cfg.dependent else 0)
            self.heads[name] = _mlp(
                n_in, HEAD_SIZES[name], cfg.head_hidden, cfg.num_layers(name), cfg.activation, cfg.dropout
            )
            seen += HEAD_SIZES[name]

    def encode(self, history: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, seqlen, 8) windows -> history vectors (B, history_dim) and last-layer attention."""
        if history.shape[-2] != self.cfg.seqlen:
            raise ValueError(f"expected seqlen {self.cfg.seqlen}, got {history.shape[-2]}")
        x = self.embed(history) + self.pe.to(history.dtype)
        attn = None
        for layer in self.layers:
            x, attn = layer(x)
        h = self.post(x[..., -1, :])
        if not torch.isfinite(h).all():
            raise FloatingPointError("non-finite history vector; training diverged")
        return h, attn

    def forecast(self, h: torch.Tensor) -> ForecastOutput:
        outputs: dict[str, torch.Tensor] = {}
        for name in self.cfg.order:
            if self.cfg.dependent:
                inp = torch.cat([outputs[p] for p in outputs] + [h], dim=-1)
            else:
                inp = h
            outputs[name] = self.heads[name](inp)
        return ForecastOutput(outputs["t"].squeeze(-1), outputs["z"], outputs["m"])

    def forward(self, history: torch.Tensor) -> tuple[ForecastOutput, torch.Tensor]:
        h, attn = self.encode(history)
        return self.forecast(h), attn


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_distribution(out: ForecastOutput) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled t_hat, zone PMF and action PMF as numpy arrays."""
    return (
        out.t_hat.detach().cpu().double().numpy(),
        softmax(out.z_logits.detach().cpu().double().numpy()),
        softmax(out.m_logits.detach().cpu().double().numpy()),
    )


@dataclass
class Checkpoint:
    config: ModelConfig
    state: dict
    t_scale: float
    zone_map_digest: str
    extra: dict = field(default_factory=dict)

    def build(self) -> NMSTPP:
        model = NMSTPP(self.config)
        model.load_state_dict(self.state)
        model.eval()
        return model


def save_checkpoint(path, model: NMSTPP, t_scale: float, zone_map_digest: str, **extra) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "config": model.cfg.to_dict(),
            "state": {k: v.detach().cpu() for k, v in model.state_dict().items()},
            "t_scale": float(t_scale),
            "zone_map": zone_map_digest,
            "extra": extra,
        },
        path,
    )


def load_checkpoint(path, config: ModelConfig | None = None, zone_map_digest: str | None = None) -> Checkpoint:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')!r}")
    cfg = ModelConfig.from_dict(blob["config"])
    if config is not None and cfg != config:
        raise ValueError(f"checkpoint config {cfg} does not match expected {config}")
    if zone_map_digest is not None and blob["zone_map"] != zone_map_digest:
        raise ValueError("checkpoint was trained with a different zone map")
    return Checkpoint(cfg, blob["state"], blob["t_scale"], blob["zone_map"], blob.get("extra", {}))
