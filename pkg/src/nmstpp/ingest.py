"""Parsing of raw on-ball event files, own-goal filtering and match splits.

Two input formats are accepted. The line-delimited JSON format mirrors the
WyScout open dataset field names, one event object per line::

    {"matchId": 2499719, "league": "premier_league", "teamId": 1609,
     "matchPeriod": "1H", "eventSec": 2.76, "eventName": "Pass",
     "subEventName": "Simple pass", "positions": [{"x": 49, "y": 49}],
     "tags": [{"id": 1801}]}

The CSV fallback carries the same information under the fixed header
``CSV_HEADER``; tags are a ``;``-separated list of integer ids.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

LEAGUES = ("premier_league", "la_liga", "ligue_1", "serie_a", "bundesliga")
_LEAGUE_ALIASES = {
    "england": "premier_league",
    "epl": "premier_league",
    "spain": "la_liga",
    "france": "ligue_1",
    "italy": "serie_a",
    "germany": "bundesliga",
}
PERIODS = ("first_half", "second_half")
_PERIOD_ALIASES = {"1h": "first_half", "2h": "second_half"}

GOAL_TAG = 101
OWN_GOAL_TAG = 102

CSV_HEADER = (
    "match_id",
    "league",
    "team_id",
    "period",
    "event_seconds",
    "x",
    "y",
    "raw_type",
    "raw_subtype",
    "tags",
)

SPLITS = ("train", "valid", "test")


class ParseError(ValueError):
    """A malformed record; ``index`` is the 0-based line/record number."""

    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class EventRecord:
    match_id: str
    league: str
    team_id: str
    period: str
    event_seconds: float
    x: float
    y: float
    raw_type: str
    raw_subtype: str
    tags: tuple[int, ...] = ()

    @property
    def is_goal(self) -> bool:
        return GOAL_TAG in self.tags

    @property
    def is_own_goal(self) -> bool:
        return OWN_GOAL_TAG in self.tags or self.raw_subtype.lower() == "own goal"


@dataclass
class MatchStream:
    match_id: str
    league: str
    events: list[EventRecord] = field(default_factory=list)


@dataclass
class ParseResult:
    streams: list[MatchStream]
    clamped: int = 0


def normalize_league(value: str) -> str:
    key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
    key = _LEAGUE_ALIASES.get(key, key)
    if key not in LEAGUES:
        raise KeyError(value)
    return key


def _normalize_period(value: str) -> str:
    key = str(value).strip().lower()
    key = _PERIOD_ALIASES.get(key, key)
    if key not in PERIODS:
        raise KeyError(value)
    return key


def _clamp(v: float) -> tuple[float, bool]:
    if v < 0.0:
        return 0.0, True
    if v > 100.0:
        return 100.0, True
    return v, False


def _record(index: int, raw: dict) -> tuple[EventRecord, int]:
    try:
        league = normalize_league(raw["league"])
    except KeyError as exc:
        raise ParseError(index, f"unknown league {exc.args[0]!r}") from None
    try:
        period = _normalize_period(raw["period"])
    except KeyError as exc:
        raise ParseError(index, f"unknown match period {exc.args[0]!r}") from None
    try:
        seconds = float(raw["event_seconds"])
        x, cx = _clamp(float(raw["x"]))
        y, cy = _clamp(float(raw["y"]))
    except (TypeError, ValueError) as exc:
        raise ParseError(index, f"non-numeric field ({exc})") from None
    if not np.isfinite(seconds) or seconds < 0:
        raise ParseError(index, f"invalid event time {seconds!r}")
    rec = EventRecord(
        match_id=str(raw["match_id"]),
        league=league,
        team_id=str(raw["team_id"]),
        period=period,
        event_seconds=seconds,
        x=x,
        y=y,
        raw_type=str(raw["raw_type"]),
        raw_subtype=str(raw.get("raw_subtype") or ""),
        tags=tuple(int(t) for t in raw.get("tags", ())),
    )
    return rec, int(cx) + int(cy)


def _jsonl_rows(text: str):
    for index, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(index, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ParseError(index, "expected a JSON object")
        try:
            positions = obj["positions"]
            if not positions:
                raise ParseError(index, "empty positions list")
            tags = [t["id"] if isinstance(t, dict) else t for t in obj.get("tags", [])]
            row = {
                "match_id": obj["matchId"],
                "league": obj["league"],
                "team_id": obj["teamId"],
                "period": obj["matchPeriod"],
                "event_seconds": obj["eventSec"],
                "x": positions[0]["x"],
                "y": positions[0]["y"],
                "raw_type": obj["eventName"],
                "raw_subtype": obj.get("subEventName", ""),
                "tags": tags,
            }
        except (KeyError, IndexError, TypeError) as exc:
            raise ParseError(index, f"missing field {exc}") from None
        yield index, row


def _csv_rows(text: str):
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise ParseError(0, f"CSV header must be {','.join(CSV_HEADER)}")
    for index, row in enumerate(reader, start=1):
        if None in row or any(v is None for v in row.values()):
            raise ParseError(index, "wrong number of columns")
        tags = row["tags"].strip()
        try:
            row["tags"] = [int(t) for t in tags.split(";")] if tags else []
        except ValueError:
            raise ParseError(index, f"invalid tags {tags!r}") from None
        yield index, row


def parse_events(data: bytes | str, fmt: str = "jsonl") -> ParseResult:
    """Parse an event file into per-match streams ordered by (period, seconds).

    Ties keep input order. Coordinates outside [0, 100] are clamped and
    counted in ``ParseResult.clamped``.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    if fmt == "jsonl":
        rows = _jsonl_rows(text)
    elif fmt == "csv":
        rows = _csv_rows(text)
    else:
        raise ValueError(f"unknown input format {fmt!r}")

    by_match: dict[str, list[tuple[int, EventRecord]]] = {}
    clamped = 0
    for index, row in rows:
        rec, n_clamped = _record(index, row)
        clamped += n_clamped
        bucket = by_match.setdefault(rec.match_id, [])
        if bucket and bucket[0][1].league != rec.league:
            raise ParseError(index, f"match {rec.match_id} changes league")
        bucket.append((index, rec))
    if clamped:
        log.warning("clamped %d out-of-range coordinates", clamped)

    streams = []
    for match_id, items in by_match.items():
        items.sort(key=lambda p: (PERIODS.index(p[1].period), p[1].event_seconds, p[0]))
        streams.append(MatchStream(match_id, items[0][1].league, [r for _, r in items]))
    return ParseResult(streams, clamped)


def drop_own_goal_matches(streams: list[MatchStream]) -> list[MatchStream]:
    return [s for s in streams if not any(e.is_own_goal for e in s.events)]


@dataclass
class SplitManifest:
    seed: int
    assignment: dict[str, str]
    train_rows: int | None = None
    valid_rows: int | None = None

    def matches(self, split: str) -> list[str]:
        return [m for m, s in self.assignment.items() if s == split]

    def counts(self) -> dict[str, dict[str, int]]:
        """Per-league match counts, keyed by league then split."""
        out: dict[str, dict[str, int]] = {}
        for key, split in self.assignment.items():
            league = key.split("/", 1)[0]
            out.setdefault(league, dict.fromkeys(SPLITS, 0))[split] += 1
        return out

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "train_rows": self.train_rows,
            "valid_rows": self.valid_rows,
            "assignment": self.assignment,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplitManifest":
        return cls(obj["seed"], dict(obj["assignment"]), obj.get("train_rows"), obj.get("valid_rows"))


def match_key(stream: MatchStream) -> str:
    return f"{stream.league}/{stream.match_id}"


def split_counts(n: int) -> tuple[int, int, int]:
    """Train/valid/test match counts for ``n`` matches of one league."""
    if n < 3:
        raise ValueError(f"need at least 3 matches per league, got {n}")
    n_valid = max(1, int(np.floor(0.1 * n)))
    n_train = min(int(np.floor(0.8 * n)), n - n_valid - 1)
    return n_train, n_valid, n - n_train - n_valid


def split_matches(
    streams: list[MatchStream],
    seed: int,
    train_rows: int | None = None,
    valid_rows: int | None = None,
) -> SplitManifest:
    """Seeded per-league 0.8/0.1/0.1 split by match count.

    Matches are keyed ``league/match_id``. Row caps are only recorded here;
    they are applied to processed-event rows when the split files are written.
    """
    if not streams:
        raise ValueError("no matches to split")
    by_league: dict[str, list[str]] = defaultdict(list)
    for s in streams:
        by_league[s.league].append(match_key(s))

    assignment: dict[str, str] = {}
    for i, league in enumerate(sorted(by_league)):
        keys = sorted(by_league[league])
        try:
            n_train, n_valid, _ = split_counts(len(keys))
        except ValueError as exc:
            raise ValueError(f"{league}: {exc}") from None
        rng = np.random.default_rng([seed, i])
        order = [keys[j] for j in rng.permutation(len(keys))]
        for j, key in enumerate(order):
            assignment[key] = "train" if j < n_train else "valid" if j < n_train + n_valid else "test"
    assignment = dict(sorted(assignment.items()))
    return SplitManifest(seed, assignment, train_rows, valid_rows)
