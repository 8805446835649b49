"""Regenerate the bundled fixtures under src/nmstpp/data/.

    python scripts/make_fixture.py

Writes fixture.jsonl (12 synthetic matches, one league), fixture_2match.jsonl
(tiny parse fixture), fixture_teams.csv (team table derived from the fixture's
own goals and shots) and fixture.toml (pipeline config for ``nmstpp all``).
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from pathlib import Path

from nmstpp.synthetic import SynthConfig, generate_events, to_jsonl

DATA = Path(__file__).resolve().parents[1] / "src" / "nmstpp" / "data"

CONFIG = """\
# Pipeline config for the bundled fixture. Paths are relative to this file.
out = "run"
baseline_alpha = 1.0

[ingest]
input = "fixture.jsonl"
format = "jsonl"
seed = 7

[model]
seqlen = 10
dim_feedforward = 64

[train]
epochs = 2
batch_size = 64
seed = 7

[metrics]
mode = "predicted"
splits = ["train", "valid", "test"]
teams = "fixture_teams.csv"
decay = 0.3

[report]
plots = true
"""


def team_table(events) -> str:
    goals, shots, matches = Counter(), Counter(), defaultdict(set)
    for e in events:
        matches[e["teamId"]].add(e["matchId"])
        if e["eventName"] == "Shot" or e["subEventName"] == "Free kick shot":
            shots[e["teamId"]] += 1
            goals[e["teamId"]] += any(t["id"] == 101 for t in e["tags"])
    per_match = {t: (goals[t] / len(m), 0.11 * shots[t] / len(m)) for t, m in matches.items()}
    ranked = sorted(per_match, key=lambda t: (-per_match[t][0], -per_match[t][1], t))
    lines = ["team,ranking,goals_per_match,xg_per_match"]
    lines += [f"{t},{i + 1},{per_match[t][0]:.4f},{per_match[t][1]:.4f}" for i, t in enumerate(ranked)]
    return "\n".join(lines) + "\n"


def main() -> None:
    events = generate_events(SynthConfig(matches=12, events_per_half=90, teams_per_league=6, seed=2017))
    (DATA / "fixture.jsonl").write_text(to_jsonl(events))
    (DATA / "fixture_teams.csv").write_text(team_table(events))
    (DATA / "fixture.toml").write_text(CONFIG)

    small = generate_events(SynthConfig(matches=2, events_per_half=12, teams_per_league=2, skipped_rate=0.2, seed=3))
    # interleave the two matches so parsing has to regroup and reorder them
    a = [e for e in small if e["matchId"] == "1000"]
    b = [e for e in small if e["matchId"] == "1001"]
    mixed = [e for pair in zip(reversed(a), b) for e in pair] + a[len(b) :] + b[len(a) :]
    (DATA / "fixture_2match.jsonl").write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in mixed))
    print(f"wrote {len(events)} + {len(mixed)} events to {DATA}")


if __name__ == "__main__":
    main()
