"""Artifact writers: provenance headers and ``.partial`` staging."""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


class Provenance:
    def __init__(self, config_digest: str = "none"):
        self.config_digest = config_digest

    @property
    def line(self) -> str:
        return f"# nmstpp {__version__} config={self.config_digest}"

    def stamp(self, obj: dict) -> dict:
        return {"provenance": {"tool": "nmstpp", "version": __version__, "config": self.config_digest}, **obj}


@contextlib.contextmanager
def staged(path, mode: str = "w"):
    """Write to ``<path>.partial`` and rename into place only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    kwargs = {"newline": ""} if "b" not in mode else {}
    with open(partial, mode, **kwargs) as fh:
        yield fh
    os.replace(partial, path)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 10))
    return str(v)


def write_csv(path, header, rows, prov: Provenance | None = None) -> Path:
    with staged(path) as fh:
        if prov is not None:
            fh.write(prov.line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            values = [row[h] for h in header] if isinstance(row, dict) else row
            w.writerow([fmt(v) for v in values])
    return Path(path)


def write_json(path, obj, prov: Provenance | None = None) -> Path:
    if prov is not None:
        obj = prov.stamp(obj)
    with staged(path) as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    return Path(path)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))
