"""Declarative pipeline configuration (TOML or JSON) with flag overrides."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .artifacts import config_hash
from .model import ModelConfig
from .train import TrainConfig


@dataclass
class IngestOptions:
    input: str = ""
    format: str = "jsonl"
    seed: int = 0
    train_rows: int | None = 100_000
    valid_rows: int | None = 10_000
    zone_map: str | None = None


@dataclass
class MetricOptions:
    decay: float = 0.3
    mode: str = "predicted"
    splits: list[str] = field(default_factory=lambda: ["test"])
    teams: str | None = None


@dataclass
class ReportOptions:
    attention_sample: int | None = None
    plots: bool = True


@dataclass
class PipelineConfig:
    out: str = "run"
    ingest: IngestOptions = field(default_factory=IngestOptions)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline_alpha: float = 1.0
    metrics: MetricOptions = field(default_factory=MetricOptions)
    report: ReportOptions = field(default_factory=ReportOptions)
    base_dir: str = field(default=".", repr=False, compare=False)

    def resolve(self, path: str | None) -> Path | None:
        if not path:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> None:
        for label, path in (("ingest.input", self.ingest.input), ("ingest.zone_map", self.ingest.zone_map), ("metrics.teams", self.metrics.teams)):
            if path and not self.resolve(path).exists():
                raise FileNotFoundError(f"{label}: {self.resolve(path)} does not exist")
        if self.metrics.mode not in ("predicted", "empirical"):
            raise ValueError("metrics.mode must be predicted or empirical")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["model"] = self.model.to_dict()
        return d

    def digest(self) -> str:
        # the output location is not part of the experiment
        d = self.to_dict()
        d.pop("out")
        return config_hash(d)


def _build(cls, data: dict):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else None
        if is_dataclass(default) and isinstance(value, dict):
            value = _build(type(default), value)
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a TOML/JSON config; ``overrides`` maps dotted keys to values and wins."""
    data: dict = {}
    base = "."
    if path:
        path = Path(path)
        text = path.read_text()
        data = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
        base = str(path.parent)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    cfg = _build(PipelineConfig, data)
    cfg.base_dir = base
    return cfg
