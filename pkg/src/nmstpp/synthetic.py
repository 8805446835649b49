"""Synthetic WyScout-style event streams for tests, fixtures and desk-scale runs.

The generator plays alternating team possessions on a 0-100 pitch seen from
the attacking side. Action choice depends on pitch third and the previous
action, movement depends on the action, and interevent time depends on the
previous action and a per-match tempo, so the history carries information
beyond a first-order chain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ingest import LEAGUES

SKIPPED_EVENTS = (
    ("Duel", "Ground defending duel"),
    ("Duel", "Air duel"),
    ("Interruption", "Ball out of the field"),
    ("Foul", "Foul"),
)

# (eventName, subEventName) choices per grouped action
RAW_NAMES = {
    "pass": [("Pass", "Simple pass")] * 6 + [("Pass", "High pass"), ("Pass", "Head pass"), ("Free Kick", "Throw in")],
    "dribble": [("Duel", "Ground attacking duel"), ("Others on the ball", "Touch"), ("Others on the ball", "Acceleration")],
    "cross": [("Pass", "Cross")] * 3 + [("Free Kick", "Corner")],
    "shot": [("Shot", "Shot")] * 5 + [("Free Kick", "Free kick shot")],
}

# next-action probabilities (pass, dribble, cross, shot) by pitch third
THIRD_PROBS = (
    (0.93, 0.07, 0.00, 0.00),
    (0.80, 0.10, 0.07, 0.03),
    (0.56, 0.10, 0.19, 0.15),
)
# base interevent seconds keyed by the previous action
BASE_SECONDS = {"pass": 2.4, "dribble": 3.2, "cross": 2.0, "shot": 9.0, "turnover": 4.5, "kickoff": 0.0}


@dataclass
class SynthConfig:
    matches: int = 10
    events_per_half: int = 160
    leagues: tuple[str, ...] = ("premier_league",)
    teams_per_league: int = 6
    own_goal_matches: int = 0
    skipped_rate: float = 0.08
    seed: int = 0


def _third(x: float) -> int:
    return 0 if x < 50 else 1 if x < 75 else 2


def _simulate_half(rng, match_id, league, teams, period, n_events, tempo, skipped_rate):
    events = []
    clock = 0.0
    team = int(rng.integers(2))
    x, y = 50.0, 50.0
    prev = "kickoff"
    while len(events) < n_events:
        probs = np.array(THIRD_PROBS[_third(x)])
        if prev == "cross":
            probs = np.array([0.35, 0.05, 0.05, 0.55])
        elif prev == "dribble":
            probs = probs * np.array([1.3, 0.5, 1.0, 1.0])
        probs /= probs.sum()
        action = ("pass", "dribble", "cross", "shot")[rng.choice(4, p=probs)]
        clock += BASE_SECONDS[prev] * tempo[team] * rng.lognormal(0.0, 0.2)

        raw_type, raw_sub = RAW_NAMES[action][rng.integers(len(RAW_NAMES[action]))]
        tags = []
        if action == "shot" and rng.random() < 0.04 + 0.10 * (x > 85):
            tags.append(101)
        events.append(_event(match_id, league, teams[team], period, clock, x, y, raw_type, raw_sub, tags))
        if rng.random() < skipped_rate:
            name, sub = SKIPPED_EVENTS[rng.integers(len(SKIPPED_EVENTS))]
            events.append(_event(match_id, league, teams[1 - team], period, clock, 100 - x, 100 - y, name, sub, []))

        if action == "pass":
            x += rng.normal(7.0, 9.0)
            y += rng.normal(0.0, 18.0)
        elif action == "dribble":
            x += rng.normal(6.0, 3.0)
            y += rng.normal(0.0, 6.0)
        elif action == "cross":
            x, y = rng.normal(91.0, 3.0), rng.normal(50.0, 8.0)
        x, y = float(np.clip(x, 0, 100)), float(np.clip(y, 0, 100))

        loss_p = {0: 0.17, 1: 0.25, 2: 0.33}[_third(x)]
        if action == "shot" or (action == "cross" and rng.random() < 0.45) or rng.random() < loss_p:
            team = 1 - team
            x, y = (100.0 - x, 100.0 - y) if action != "shot" else (8.0, 50.0)
            prev = "shot" if action == "shot" else "turnover"
        else:
            prev = action
    return events


def _event(match_id, league, team, period, clock, x, y, raw_type, raw_sub, tags):
    return {
        "matchId": match_id,
        "league": league,
        "teamId": team,
        "matchPeriod": period,
        "eventSec": round(clock, 3),
        "eventName": raw_type,
        "subEventName": raw_sub,
        "positions": [{"x": round(x, 2), "y": round(y, 2)}],
        "tags": [{"id": t} for t in tags],
    }


def generate_events(cfg: SynthConfig) -> list[dict]:
    """WyScout-style event dicts (see :mod:`nmstpp.ingest`), in match order."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for m in range(cfg.matches):
        league = cfg.leagues[m % len(cfg.leagues)]
        if league not in LEAGUES:
            raise ValueError(f"unknown league {league}")
        pool = [f"{league[:3]}-team-{i:02d}" for i in range(cfg.teams_per_league)]
        home, away = rng.choice(len(pool), size=2, replace=False)
        teams = (pool[home], pool[away])
        tempo = rng.uniform(0.6, 1.6, size=2)
        match_id = str(1000 + m)
        for period in ("1H", "2H"):
            out.extend(_simulate_half(rng, match_id, league, teams, period, cfg.events_per_half, tempo, cfg.skipped_rate))
        if m < cfg.own_goal_matches:
            ev = dict(out[-1])
            ev["eventName"], ev["subEventName"], ev["tags"] = "Others on the ball", "Clearance", [{"id": 102}]
            out.append(ev)
    return out


def to_jsonl(events: list[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)


def exponential_stream(n_events: int = 10_000, rate: float = 0.2, seed: int = 0):
    """A single stream of iid Exp(rate) interevent times with random marks.

    Returns ``(matches, t_max)`` where ``matches`` holds one processed-event
    list, ready for :func:`nmstpp.features.build_windows`.
    """
    from .features import Action, ProcessedEvent

    rng = np.random.default_rng(seed)
    t = rng.exponential(1.0 / rate, size=n_events)
    zones = rng.integers(1, 21, size=n_events)
    actions = rng.integers(1, 6, size=n_events)
    clock = np.cumsum(t)
    events = [
        ProcessedEvent("exp", "premier_league", "A", "first_half", float(c), float(dt), int(z), Action(int(a)))
        for c, dt, z, a in zip(clock, t, zones, actions)
    ]
    return events, float(t.max())
