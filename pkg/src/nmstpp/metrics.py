"""HAS, HPUS / HPUS+, poss-util and team-season analysis."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .features import Action, N_ACTIONS, N_ZONES, PossessionRecord, ZoneMap

ATTACK_ACTIONS = (Action.CROSS, Action.SHOT)
DEFAULT_DECAY = 0.3
PMF_TOL = 1e-6


def _check_pmf(pmf, size: int, name: str) -> np.ndarray:
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape[-1] != size:
        raise ValueError(f"{name} PMF must have {size} entries")
    if np.any(pmf < -PMF_TOL) or np.any(np.abs(pmf.sum(axis=-1) - 1.0) > PMF_TOL):
        raise ValueError(f"{name} PMF is not normalized")
    return pmf


def expected_zone_value(zone_pmf, zone_map: ZoneMap | None = None):
    """0 * P(area 0) + 5 * P(area 1) + 10 * P(area 2)."""
    pmf = _check_pmf(zone_pmf, N_ZONES, "zone")
    zone_map = zone_map or ZoneMap.default()
    values = np.array([5.0 * zone_map.areas[z] for z in range(1, N_ZONES + 1)])
    return pmf @ values


ACTION_VALUES = np.array(
    [
        {Action.PASS: 5.0, Action.DRIBBLE: 5.0, Action.CROSS: 10.0, Action.SHOT: 10.0}.get(a, 0.0)
        for a in Action
    ]
)


def expected_action_value(action_pmf):
    """5 * P(pass, dribble) + 10 * P(cross, shot); possession end scores 0."""
    return _check_pmf(action_pmf, N_ACTIONS, "action") @ ACTION_VALUES


@dataclass(frozen=True)
class HASRecord:
    e_zone: float
    e_action: float
    t_raw: float
    t_clamped: float
    has: float


def has(e_zone: float, e_action: float, t_raw: float) -> HASRecord:
    t_clamped = max(float(t_raw), 1.0)
    score = math.sqrt(max(e_zone * e_action, 0.0)) / t_clamped
    return HASRecord(float(e_zone), float(e_action), float(t_raw), t_clamped, score)


def decay(x, rate: float = DEFAULT_DECAY):
    """phi(x) = exp(-rate * (x - 1)); the last action of a possession has x = 1."""
    return np.exp(-rate * (np.asarray(x, dtype=np.float64) - 1.0))


@dataclass
class PossessionScore:
    possession_id: str
    team_id: str
    records: list[HASRecord]
    hpus: float
    attacking: bool
    poss_util_raw: float = 0.0
    poss_util: float = 0.0
    end_seconds: float = 0.0
    period: str = "first_half"
    match_id: str = ""
    contains_attack: bool = False

    @property
    def hpus_plus(self) -> float | None:
        return self.hpus if self.attacking else None


def hpus(records: list[HASRecord], final_action: Action | None = None, rate: float = DEFAULT_DECAY) -> PossessionScore:
    """Decay-weighted sum of HAS; the last record gets weight 1.

    ``final_action`` is the class of the last real (non-synthetic) event and
    sets the attacking flag used for HPUS+.
    """
    n = len(records)
    if n == 0:
        raise ValueError("empty possession")
    weights = decay(n + 1 - np.arange(1, n + 1), rate)
    value = float(weights @ np.array([r.has for r in records]))
    return PossessionScore("", "", list(records), value, final_action in ATTACK_ACTIONS)


def poss_util_raw(action_pmfs, observed_actions) -> float:
    """Sum of P(cross) + P(shot) over the possession, negated when no attack was observed."""
    pmfs = _check_pmf(np.atleast_2d(action_pmfs), N_ACTIONS, "action")
    raw = float(pmfs[:, Action.CROSS - 1].sum() + pmfs[:, Action.SHOT - 1].sum())
    attacked = any(Action(a) in ATTACK_ACTIONS for a in observed_actions)
    return raw if attacked else -raw


def rank_poss_util(raw, attacked=None) -> np.ndarray:
    """Percentile-rank positives into (0, 1] and negatives into [-1, 0).

    Ties take their mean rank. ``attacked`` decides the sign class when given
    (a raw value of exactly 0 is otherwise treated as positive).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("empty poss-util population")
    pos = raw >= 0 if attacked is None else np.asarray(attacked, dtype=bool)
    out = np.zeros_like(raw)
    if pos.any():
        out[pos] = rankdata(raw[pos], method="average") / pos.sum()
    neg = ~pos
    if neg.any():
        out[neg] = -rankdata(np.abs(raw[neg]), method="average") / neg.sum()
    return out


@dataclass
class EventForecast:
    """Per-event inputs to HAS: time in seconds plus zone/action PMFs."""

    t_seconds: float
    zone_pmf: np.ndarray
    action_pmf: np.ndarray


def empirical_forecast(ev) -> EventForecast:
    z = np.zeros(N_ZONES)
    z[ev.zone - 1] = 1.0
    m = np.zeros(N_ACTIONS)
    m[int(ev.action) - 1] = 1.0
    return EventForecast(ev.t, z, m)


def score_possessions(
    possessions: list[PossessionRecord],
    forecasts,
    zone_map: ZoneMap | None = None,
    rate: float = DEFAULT_DECAY,
) -> list[PossessionScore]:
    """Score possessions from per-event forecasts.

    ``forecasts(event)`` returns an :class:`EventForecast` or ``None``; events
    without a forecast are left out of the possession, and possessions with
    no forecast events are skipped. Poss-util is ranked over the returned set.
    """
    zone_map = zone_map or ZoneMap.default()
    scores = []
    for p in possessions:
        fcs = [(ev, forecasts(ev)) for ev in p.events]
        fcs = [(ev, fc) for ev, fc in fcs if fc is not None]
        if not fcs:
            continue
        records = [
            has(expected_zone_value(fc.zone_pmf, zone_map), expected_action_value(fc.action_pmf), max(fc.t_seconds, 0.0))
            for _, fc in fcs
        ]
        real = p.real_events
        final = real[-1].action if real else None
        s = hpus(records, final, rate)
        s.possession_id = f"{p.match_id}/{p.index}"
        s.team_id = p.team_id
        s.match_id = p.match_id
        s.end_seconds = p.events[-1].event_seconds
        s.period = p.events[-1].period
        s.poss_util_raw = poss_util_raw([fc.action_pmf for _, fc in fcs], [e.action for e in real])
        s.contains_attack = any(e.action in ATTACK_ACTIONS for e in real)
        scores.append(s)
    if scores:
        ranked = rank_poss_util([s.poss_util_raw for s in scores], [s.contains_attack for s in scores])
        for s, r in zip(scores, ranked):
            s.poss_util = float(r)
    return scores


@dataclass
class TeamSeasonStats:
    team: str
    ranking: int
    avg_goal: float
    avg_xg: float
    avg_hpus: float
    avg_hpus_plus: float
    matches: int = 0

    @property
    def hpus_ratio(self) -> float:
        return self.avg_hpus_plus / self.avg_hpus if self.avg_hpus > 0 else float("nan")


@dataclass(frozen=True)
class TeamInfo:
    team: str
    ranking: int
    goals_per_match: float
    xg_per_match: float


def read_team_table(path) -> dict[str, TeamInfo]:
    """CSV with header team,ranking,goals_per_match,xg_per_match."""
    out = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(line for line in fh if not line.startswith("#")):
            out[r["team"]] = TeamInfo(r["team"], int(r["ranking"]), float(r["goals_per_match"]), float(r["xg_per_match"]))
    return out


def team_season_aggregate(scores: list[PossessionScore], teams: dict[str, TeamInfo]) -> list[TeamSeasonStats]:
    """Average per-match HPUS and HPUS+ sums for every team, joined with ``teams``."""
    per_match: dict[str, dict[str, list[float]]] = defaultdict(dict)
    for s in scores:
        acc = per_match[s.team_id].setdefault(s.match_id, [0.0, 0.0])
        acc[0] += s.hpus
        if s.attacking:
            acc[1] += s.hpus
    missing = sorted(set(per_match) - set(teams))
    if missing:
        raise KeyError(f"teams missing from team table: {', '.join(missing)}")
    stats = []
    for team in sorted(per_match, key=lambda t: (teams[t].ranking, t)):
        sums = np.array(list(per_match[team].values()))
        info = teams[team]
        stats.append(
            TeamSeasonStats(
                team,
                info.ranking,
                info.goals_per_match,
                info.xg_per_match,
                float(sums[:, 0].mean()),
                float(sums[:, 1].mean()),
                len(sums),
            )
        )
    return stats


CORRELATION_COLUMNS = ("ranking", "goal", "xg", "hpus", "hpus_plus")


def correlation_matrix(stats: list[TeamSeasonStats]) -> np.ndarray:
    """5x5 Pearson correlations over (ranking, goal, xG, HPUS, HPUS+)."""
    if len(stats) < 3:
        raise ValueError("need at least 3 teams")
    data = np.array([[s.ranking, s.avg_goal, s.avg_xg, s.avg_hpus, s.avg_hpus_plus] for s in stats], dtype=np.float64)
    for name, col in zip(CORRELATION_COLUMNS, data.T):
        if np.ptp(col) == 0:
            raise ValueError(f"column {name} has zero variance")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr


def load_reference_team_table() -> list[TeamSeasonStats]:
    """The published 2017/18 Premier League table of season averages."""
    path = Path(__file__).with_name("data") / "epl_2017_18_hpus.csv"
    stats = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            stats.append(
                TeamSeasonStats(
                    r["team"],
                    int(r["ranking"]),
                    float(r["goal"]),
                    float(r["xg"]),
                    float(r["hpus"]),
                    float(r["hpus_plus"]),
                )
            )
    return stats


@dataclass
class Timeline:
    bins: list[int]
    hpus: dict[str, np.ndarray] = field(default_factory=dict)
    hpus_plus: dict[str, np.ndarray] = field(default_factory=dict)
    goals: dict[str, np.ndarray] = field(default_factory=dict)


FIRST_HALF_BINS = list(range(0, 45, 5))
SECOND_HALF_BINS = list(range(60, 105, 5))


def match_minute(period: str, seconds: float) -> float:
    """Match clock with the second half starting at minute 60."""
    return seconds / 60.0 + (60.0 if period == "second_half" else 0.0)


def _bin_index(period: str, seconds: float, width: int) -> int:
    minute = seconds / 60.0
    per_half = 45 // width
    i = min(int(minute // width), per_half - 1)
    return i + (per_half if period == "second_half" else 0)


def match_timeline(scores: list[PossessionScore], teams, width: int = 5, goals=()) -> Timeline:
    """Cumulative HPUS / HPUS+ per team over 5-minute bins.

    A possession counts in the bin of its final event. Stoppage time folds
    into the last bin of each half. ``goals`` is an iterable of
    (team, period, seconds) markers passed through per bin.
    """
    per_half = 45 // width
    bins = list(range(0, 45, width))[:per_half] + list(range(60, 105, width))[:per_half]
    tl = Timeline(bins)
    for team in teams:
        tl.hpus[team] = np.zeros(len(bins))
        tl.hpus_plus[team] = np.zeros(len(bins))
        tl.goals[team] = np.zeros(len(bins), dtype=int)
    for s in scores:
        i = _bin_index(s.period, s.end_seconds, width)
        tl.hpus[s.team_id][i] += s.hpus
        if s.attacking:
            tl.hpus_plus[s.team_id][i] += s.hpus
    for team, period, seconds in goals:
        tl.goals[team][_bin_index(period, seconds, width)] += 1
    for team in teams:
        tl.hpus[team] = np.cumsum(tl.hpus[team])
        tl.hpus_plus[team] = np.cumsum(tl.hpus_plus[team])
    return tl
