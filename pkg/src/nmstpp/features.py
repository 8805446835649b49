"""Zones, action grouping, processed events, possessions and model windows."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .ingest import MatchStream

N_ZONES = 20
N_ACTIONS = 5
GOAL_CENTER = (100.0, 50.0)


class Action(IntEnum):
    """Grouped action classes, 1-indexed. ``POSSESSION_END`` is synthesized."""

    PASS = 1
    POSSESSION_END = 2
    DRIBBLE = 3
    CROSS = 4
    SHOT = 5


ACTION_NAMES = {a: a.name.lower() for a in Action}

# WyScout (eventName, subEventName) -> grouped class; anything else is skipped.
ACTION_GROUPS: dict[tuple[str, str], Action] = {
    ("pass", "hand pass"): Action.PASS,
    ("pass", "head pass"): Action.PASS,
    ("pass", "high pass"): Action.PASS,
    ("pass", "launch"): Action.PASS,
    ("pass", "simple pass"): Action.PASS,
    ("pass", "smart pass"): Action.PASS,
    ("others on the ball", "clearance"): Action.PASS,
    ("free kick", "goal kick"): Action.PASS,
    ("free kick", "throw in"): Action.PASS,
    ("free kick", "free kick"): Action.PASS,
    ("duel", "ground attacking duel"): Action.DRIBBLE,
    ("others on the ball", "acceleration"): Action.DRIBBLE,
    ("others on the ball", "touch"): Action.DRIBBLE,
    ("pass", "cross"): Action.CROSS,
    ("free kick", "corner"): Action.CROSS,
    ("free kick", "free kick cross"): Action.CROSS,
    ("shot", "shot"): Action.SHOT,
    ("free kick", "free kick shot"): Action.SHOT,
    ("free kick", "penalty"): Action.SHOT,
}


def group_action(raw_type: str, raw_subtype: str) -> Action | None:
    """Map a raw action to its class, or ``None`` when it is dropped."""
    return ACTION_GROUPS.get((raw_type.strip().lower(), raw_subtype.strip().lower()))


@dataclass(frozen=True)
class ZoneMap:
    """Rectangular pitch partition into 20 zones plus the HPUS area of each zone.

    ``cells[i][j]`` is the zone id of x-bin ``i`` and y-bin ``j``. Bins are
    half-open except the last bin on each axis, which includes 100.
    """

    x_breaks: tuple[float, ...]
    y_breaks: tuple[float, ...]
    cells: tuple[tuple[int, ...], ...]
    areas: dict[int, int]

    def __post_init__(self):
        for name, b in (("x_breaks", self.x_breaks), ("y_breaks", self.y_breaks)):
            if b[0] != 0 or b[-1] != 100 or any(lo >= hi for lo, hi in zip(b, b[1:])):
                raise ValueError(f"{name} must ascend strictly from 0 to 100")
        if len(self.cells) != len(self.x_breaks) - 1 or any(
            len(row) != len(self.y_breaks) - 1 for row in self.cells
        ):
            raise ValueError("cell table shape does not match breaks")
        ids = sorted(z for row in self.cells for z in row)
        if ids != list(range(1, N_ZONES + 1)):
            raise ValueError("cells must assign each zone 1..20 exactly once")
        if sorted(self.areas) != ids or not set(self.areas.values()) <= {0, 1, 2}:
            raise ValueError("every zone needs an area in {0, 1, 2}")

    @classmethod
    def default(cls) -> "ZoneMap":
        x_breaks = (0.0, 25.0, 50.0, 75.0, 100.0)
        y_breaks = (0.0, 19.0, 37.0, 63.0, 81.0, 100.0)
        ny = len(y_breaks) - 1
        cells = tuple(tuple(i * ny + j + 1 for j in range(ny)) for i in range(len(x_breaks) - 1))
        zm = cls(x_breaks, y_breaks, cells, dict.fromkeys(range(1, N_ZONES + 1), 0))
        areas = {}
        for z in range(1, N_ZONES + 1):
            cx = zm.centroid(z)[0]
            areas[z] = 0 if cx < 50 else 1 if cx < 75 else 2
        return cls(x_breaks, y_breaks, cells, areas)

    def _bin(self, breaks, v: float) -> int:
        i = int(np.searchsorted(breaks, v, side="right")) - 1
        return min(max(i, 0), len(breaks) - 2)

    def zone_of(self, x: float, y: float) -> int:
        return self.cells[self._bin(self.x_breaks, x)][self._bin(self.y_breaks, y)]

    def _cell(self, zone: int) -> tuple[int, int]:
        for i, row in enumerate(self.cells):
            for j, z in enumerate(row):
                if z == zone:
                    return i, j
        raise ValueError(f"zone {zone} not in map")

    def centroid(self, zone: int) -> tuple[float, float]:
        i, j = self._cell(zone)
        return (
            (self.x_breaks[i] + self.x_breaks[i + 1]) / 2,
            (self.y_breaks[j] + self.y_breaks[j + 1]) / 2,
        )

    def area_members(self, area: int) -> list[int]:
        return [z for z in sorted(self.areas) if self.areas[z] == area]

    def to_json(self) -> dict:
        return {
            "x_breaks": list(self.x_breaks),
            "y_breaks": list(self.y_breaks),
            "cells": [list(r) for r in self.cells],
            "areas": {str(z): a for z, a in sorted(self.areas.items())},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ZoneMap":
        return cls(
            tuple(float(b) for b in obj["x_breaks"]),
            tuple(float(b) for b in obj["y_breaks"]),
            tuple(tuple(int(z) for z in row) for row in obj["cells"]),
            {int(z): int(a) for z, a in obj["areas"].items()},
        )

    @classmethod
    def load(cls, path) -> "ZoneMap":
        return cls.from_json(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def zone_of(x: float, y: float, zone_map: ZoneMap | None = None) -> int:
    return (zone_map or ZoneMap.default()).zone_of(x, y)


@dataclass
class ProcessedEvent:
    match_id: str
    league: str
    team_id: str
    period: str
    event_seconds: float
    t: float
    zone: int
    action: Action
    zone_s: float = 0.0
    zone_deltax: float = 0.0
    zone_deltay: float = 0.0
    zone_sg: float = 0.0
    zone_thetag: float = 0.0
    possession_index: int = 0
    is_goal: bool = False

    @property
    def synthetic(self) -> bool:
        return self.action == Action.POSSESSION_END


PROCESSED_HEADER = (
    "match_id",
    "league",
    "team_id",
    "period",
    "event_seconds",
    "possession_index",
    "t",
    "zone",
    "action",
    "zone_s",
    "zone_deltax",
    "zone_deltay",
    "zone_sg",
    "zone_thetag",
    "is_goal",
)


@dataclass
class PossessionRecord:
    match_id: str
    team_id: str
    index: int
    events: list[ProcessedEvent] = field(default_factory=list)

    @property
    def real_events(self) -> list[ProcessedEvent]:
        return [e for e in self.events if not e.synthetic]


def _geometry(events: list[ProcessedEvent], zone_map: ZoneMap) -> None:
    gx, gy = GOAL_CENTER
    prev = None
    for ev in events:
        cx, cy = zone_map.centroid(ev.zone)
        px, py = prev if prev is not None else (cx, cy)
        ev.zone_deltax = cx - px
        ev.zone_deltay = cy - py
        ev.zone_s = math.hypot(ev.zone_deltax, ev.zone_deltay)
        ev.zone_sg = math.hypot(gx - cx, gy - cy)
        ev.zone_thetag = math.atan2(cy - gy, gx - cx)
        prev = (cx, cy)


def segment_possessions(events: list[ProcessedEvent]) -> list[PossessionRecord]:
    """Split one match's real events into team possessions.

    A possession is a maximal run of consecutive events by one team within a
    period; each is closed by a synthetic ``POSSESSION_END`` row copying the
    zone of the last real event, with ``t = 0``.
    """
    possessions: list[PossessionRecord] = []
    for ev in events:
        if ev.synthetic:
            continue
        last = possessions[-1].events[-1] if possessions else None
        if last is None or last.team_id != ev.team_id or last.period != ev.period:
            possessions.append(PossessionRecord(ev.match_id, ev.team_id, len(possessions)))
        ev.possession_index = possessions[-1].index
        possessions[-1].events.append(ev)
    for p in possessions:
        last = p.events[-1]
        p.events.append(
            ProcessedEvent(
                match_id=last.match_id,
                league=last.league,
                team_id=last.team_id,
                period=last.period,
                event_seconds=last.event_seconds,
                t=0.0,
                zone=last.zone,
                action=Action.POSSESSION_END,
                possession_index=p.index,
            )
        )
    return possessions


def process_match(stream: MatchStream, zone_map: ZoneMap | None = None) -> list[ProcessedEvent]:
    """Group actions, compute interevent times, insert possession ends and geometry.

    Interevent time is measured between kept events and restarts at 0 at the
    first event of each period.
    """
    zone_map = zone_map or ZoneMap.default()
    kept: list[ProcessedEvent] = []
    prev = None
    for rec in stream.events:
        action = group_action(rec.raw_type, rec.raw_subtype)
        if action is None:
            continue
        if prev is None or prev.period != rec.period:
            t = 0.0
        else:
            t = max(rec.event_seconds - prev.event_seconds, 0.0)
        kept.append(
            ProcessedEvent(
                match_id=rec.match_id,
                league=rec.league,
                team_id=rec.team_id,
                period=rec.period,
                event_seconds=rec.event_seconds,
                t=t,
                zone=zone_map.zone_of(rec.x, rec.y),
                action=action,
                is_goal=rec.is_goal,
            )
        )
        prev = rec
    rows = [ev for p in segment_possessions(kept) for ev in p.events]
    _geometry(rows, zone_map)
    return rows


def possessions_from_rows(rows: list[ProcessedEvent]) -> list[PossessionRecord]:
    """Regroup already processed rows (synthetic ends included) by possession."""
    out: list[PossessionRecord] = []
    for ev in rows:
        if not out or out[-1].match_id != ev.match_id or out[-1].index != ev.possession_index:
            out.append(PossessionRecord(ev.match_id, ev.team_id, ev.possession_index))
        out[-1].events.append(ev)
    return out


def group_by_match(rows: list[ProcessedEvent]) -> list[list[ProcessedEvent]]:
    matches: dict[str, list[ProcessedEvent]] = {}
    for ev in rows:
        matches.setdefault(ev.match_id, []).append(ev)
    return list(matches.values())


def write_processed(rows: list[ProcessedEvent], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PROCESSED_HEADER)
    for e in rows:
        w.writerow(
            [
                e.match_id,
                e.league,
                e.team_id,
                e.period,
                repr(e.event_seconds),
                e.possession_index,
                repr(e.t),
                e.zone,
                int(e.action),
                repr(e.zone_s),
                repr(e.zone_deltax),
                repr(e.zone_deltay),
                repr(e.zone_sg),
                repr(e.zone_thetag),
                int(e.is_goal),
            ]
        )


def read_processed(fh) -> list[ProcessedEvent]:
    rows = []
    lines = (line for line in fh if not line.startswith("#"))
    for r in csv.DictReader(lines):
        rows.append(
            ProcessedEvent(
                match_id=r["match_id"],
                league=r["league"],
                team_id=r["team_id"],
                period=r["period"],
                event_seconds=float(r["event_seconds"]),
                t=float(r["t"]),
                zone=int(r["zone"]),
                action=Action(int(r["action"])),
                zone_s=float(r["zone_s"]),
                zone_deltax=float(r["zone_deltax"]),
                zone_deltay=float(r["zone_deltay"]),
                zone_sg=float(r["zone_sg"]),
                zone_thetag=float(r["zone_thetag"]),
                possession_index=int(r["possession_index"]),
                is_goal=bool(int(r["is_goal"])),
            )
        )
    return rows


@dataclass
class WindowSet:
    """Stacked sequence windows.

    ``history`` is (n, seqlen, 8) with columns t_scaled, zone, action, zone_s,
    zone_deltax, zone_deltay, zone_sg, zone_thetag. ``target_*`` hold the
    next event; ``match_ids``/``target_index`` locate it in its match.
    """

    history: np.ndarray
    target_t: np.ndarray
    target_zone: np.ndarray
    target_action: np.ndarray
    match_ids: list[str]
    target_index: np.ndarray

    def __len__(self) -> int:
        return len(self.target_t)

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(
            self.history[idx],
            self.target_t[idx],
            self.target_zone[idx],
            self.target_action[idx],
            [self.match_ids[i] for i in idx],
            self.target_index[idx],
        )


def _event_row(e: ProcessedEvent, t_scale: float) -> list[float]:
    return [
        e.t * t_scale,
        e.zone,
        int(e.action),
        e.zone_s,
        e.zone_deltax,
        e.zone_deltay,
        e.zone_sg,
        e.zone_thetag,
    ]


def build_windows(matches: list[list[ProcessedEvent]], seqlen: int, t_scale: float) -> WindowSet:
    """Sliding windows of ``seqlen`` history rows plus the following event, per match."""
    if seqlen < 1:
        raise ValueError("seqlen must be >= 1")
    if t_scale <= 0:
        raise ValueError("t_scale must be positive")
    hist, tt, tz, tm, mids, tidx = [], [], [], [], [], []
    for events in matches:
        if len(events) < seqlen + 1:
            continue
        rows = np.array([_event_row(e, t_scale) for e in events], dtype=np.float64)
        for i in range(seqlen, len(events)):
            hist.append(rows[i - seqlen : i])
            tt.append(rows[i, 0])
            tz.append(events[i].zone)
            tm.append(int(events[i].action))
            mids.append(events[i].match_id)
            tidx.append(i)
    if hist:
        history = np.stack(hist)
    else:
        history = np.zeros((0, seqlen, 8))
    return WindowSet(
        history,
        np.array(tt, dtype=np.float64),
        np.array(tz, dtype=np.int64),
        np.array(tm, dtype=np.int64),
        mids,
        np.array(tidx, dtype=np.int64),
    )


@dataclass(frozen=True)
class ClassWeights:
    zone: tuple[float, ...]
    action: tuple[float, ...]
    dribble_multiplier: float = 1.0

    @classmethod
    def uniform(cls) -> "ClassWeights":
        return cls((1.0,) * N_ZONES, (1.0,) * N_ACTIONS)

    @classmethod
    def from_targets(cls, zones, actions, dribble_multiplier: float = 1.16) -> "ClassWeights":
        zc = np.bincount(np.asarray(zones) - 1, minlength=N_ZONES)
        ac = np.bincount(np.asarray(actions) - 1, minlength=N_ACTIONS)
        zw = class_weights(zc, names=[f"zone {z}" for z in range(1, N_ZONES + 1)])
        aw = class_weights(ac, dribble_multiplier, names=[ACTION_NAMES[a] for a in Action])
        return cls(tuple(zw), tuple(aw), dribble_multiplier)


def class_weights(counts, dribble_multiplier: float = 1.0, names=None, dribble_index=None) -> np.ndarray:
    """Balanced weights ``N / (K * n_i)``.

    For the 5 action classes the dribble weight is then scaled by
    ``dribble_multiplier``; pass ``dribble_index`` for other layouts.
    """
    counts = np.asarray(counts, dtype=np.float64)
    names = names or [str(i + 1) for i in range(len(counts))]
    for n, name in zip(counts, names):
        if n <= 0:
            raise ValueError(f"class {name} has no samples")
    w = counts.sum() / (len(counts) * counts)
    if dribble_index is None and len(counts) == N_ACTIONS:
        dribble_index = Action.DRIBBLE - 1
    if dribble_index is not None:
        w[dribble_index] *= dribble_multiplier
    return w
