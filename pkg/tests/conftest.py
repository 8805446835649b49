import json
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from nmstpp.features import Action, ProcessedEvent

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "src" / "nmstpp" / "data"


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def raw_event(match_id="1", team="A", period="1H", sec=0.0, x=50.0, y=50.0, name="Pass", sub="Simple pass", tags=(), league="premier_league"):
    return {
        "matchId": match_id,
        "league": league,
        "teamId": team,
        "matchPeriod": period,
        "eventSec": sec,
        "eventName": name,
        "subEventName": sub,
        "positions": [{"x": x, "y": y}],
        "tags": [{"id": t} for t in tags],
    }


def jsonl(events) -> str:
    return "".join(json.dumps(e) + "\n" for e in events)


def processed(n, match_id="m", team="A", zone=1, action=Action.PASS, t=1.0):
    return [ProcessedEvent(match_id, "premier_league", team, "first_half", float(i), t, zone, action) for i in range(n)]


def random_history(rng, n, seqlen):
    """(n, seqlen, 8) windows with valid zone/action ids and pitch-scale geometry."""
    h = np.zeros((n, seqlen, 8))
    h[..., 0] = rng.uniform(0, 1, (n, seqlen))
    h[..., 1] = rng.integers(1, 21, (n, seqlen))
    h[..., 2] = rng.integers(1, 6, (n, seqlen))
    h[..., 3:7] = rng.uniform(-60, 100, (n, seqlen, 4))
    h[..., 7] = rng.uniform(-np.pi / 2, np.pi / 2, (n, seqlen))
    return h


ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"AC{number:<2} {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
