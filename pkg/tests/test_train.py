import math

import numpy as np
import pytest
import torch

from nmstpp.features import ClassWeights, build_windows, process_match
from nmstpp.ingest import parse_events
from nmstpp.model import NMSTPP, ORDERS, ForecastOutput, ModelConfig
from nmstpp.synthetic import SynthConfig, generate_events, to_jsonl
from nmstpp.train import (
    GridSpec,
    TrainConfig,
    TrainingDiverged,
    evaluate_windows,
    grid_search,
    loss,
    loss_terms,
    train,
)

SMALL = ModelConfig(seqlen=5, dim_feedforward=16)


@pytest.fixture(scope="module")
def matches():
    streams = parse_events(to_jsonl(generate_events(SynthConfig(matches=3, events_per_half=30, seed=4)))).streams
    return [process_match(s) for s in streams]


@pytest.fixture(scope="module")
def windows(matches):
    return build_windows(matches, SMALL.seqlen, 1.0 / max(e.t for m in matches for e in m))


def weighted_ce_oracle(logits, target, w):
    num = den = 0.0
    for row, y in zip(logits, target):
        m = max(row)
        logz = m + math.log(sum(math.exp(v - m) for v in row))
        num += w[y - 1] * (logz - row[y - 1])
        den += w[y - 1]
    return num / den


def test_perfect_forecast_loss_vanishes():
    tz, tm = np.array([3, 17]), np.array([1, 5])
    z = torch.full((2, 20), -1000.0, dtype=torch.float64)
    m = torch.full((2, 5), -1000.0, dtype=torch.float64)
    z[[0, 1], tz - 1] = 0.0
    m[[0, 1], tm - 1] = 0.0
    out = ForecastOutput(torch.tensor([0.1, 0.3], dtype=torch.float64), z, m)
    assert loss(out, [0.1, 0.3], tz, tm).total < 1e-4


def test_uniform_logits_single_sample_analytic():
    out = ForecastOutput(torch.tensor([0.2], dtype=torch.float64), torch.zeros(1, 20, dtype=torch.float64), torch.zeros(1, 5, dtype=torch.float64))
    lb = loss(out, [0.1], [4], [2], ClassWeights.uniform())
    assert lb.rmse_t == pytest.approx(0.1, abs=1e-12)
    assert 10 * lb.rmse_t == pytest.approx(1.0, abs=1e-12)
    assert lb.cel_zone == pytest.approx(math.log(20), abs=1e-12)
    assert lb.cel_action == pytest.approx(math.log(5), abs=1e-12)
    assert lb.total == pytest.approx(1.0 + math.log(20) + math.log(5), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_batch_matches_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    b = 17
    t_hat, t_true = rng.normal(size=b), rng.uniform(size=b)
    zl, ml = rng.normal(size=(b, 20)) * 3, rng.normal(size=(b, 5)) * 3
    tz, tm = rng.integers(1, 21, b), rng.integers(1, 6, b)
    w = ClassWeights(tuple(rng.uniform(0.2, 5, 20)), tuple(rng.uniform(0.2, 5, 5)))
    out = ForecastOutput(*(torch.tensor(a) for a in (t_hat, zl, ml)))
    lb = loss(out, t_true, tz, tm, w, time_weight=10.0)
    rmse = math.sqrt(sum((a - c) ** 2 for a, c in zip(t_hat, t_true)) / b)
    cz = weighted_ce_oracle(zl.tolist(), tz.tolist(), w.zone)
    cm = weighted_ce_oracle(ml.tolist(), tm.tolist(), w.action)
    assert lb.rmse_t == pytest.approx(rmse, abs=1e-9)
    assert lb.cel_zone == pytest.approx(cz, abs=1e-9)
    assert lb.cel_action == pytest.approx(cm, abs=1e-9)
    assert lb.total == pytest.approx(10 * rmse + cz + cm, abs=1e-9)


def test_empty_batch_rejected():
    out = ForecastOutput(torch.zeros(0), torch.zeros(0, 20), torch.zeros(0, 5))
    with pytest.raises(ValueError, match="empty"):
        loss_terms(out, torch.zeros(0), torch.zeros(0, dtype=torch.long), torch.zeros(0, dtype=torch.long))


def test_zero_learning_rate_leaves_parameters(windows):
    torch.manual_seed(0)
    m = NMSTPP(SMALL)
    before = {k: v.clone() for k, v in m.state_dict().items()}
    train(m, windows, TrainConfig(lr=0.0, epochs=3, batch_size=8))
    for k, v in m.state_dict().items():
        assert torch.equal(v, before[k]), k


def test_seeded_runs_repeat_exactly(windows):
    def run():
        torch.manual_seed(3)
        return [r.train for r in train(NMSTPP(SMALL), windows, TrainConfig(epochs=3, batch_size=16, seed=3)).history]

    assert run() == run()


def test_overfit_small_set():
    from nmstpp.experiments import overfit

    h = overfit(epochs=200).history
    assert h[-1].train.total < 0.1 * h[0].train.total


def test_best_epoch_restored(windows, matches):
    torch.manual_seed(0)
    m = NMSTPP(SMALL)
    res = train(m, windows, TrainConfig(epochs=4, batch_size=16), windows)
    assert res.best.valid.total == min(r.valid.total for r in res.history)
    assert evaluate_windows(m, windows).total == pytest.approx(res.best.valid.total, rel=1e-6)


def test_non_finite_targets_raise_divergence(windows):
    bad = windows.subset(np.arange(len(windows)))
    bad.target_t[0] = np.nan
    with pytest.raises(TrainingDiverged):
        train(NMSTPP(SMALL), bad, TrainConfig(epochs=1))


def test_invalid_train_config():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_single_cell_grid_equals_direct_run(matches):
    t_scale = 1.0 / max(e.t for m in matches for e in m)
    cfg = TrainConfig(epochs=2, batch_size=16)
    (row,) = grid_search(GridSpec(seqlen=[5], dim_feedforward=[16]), matches[:2], matches[2:], t_scale, cfg)
    torch.manual_seed(cfg.seed)
    res = train(NMSTPP(SMALL), build_windows(matches[:2], 5, t_scale), cfg, build_windows(matches[2:], 5, t_scale))
    assert row["valid_total"] == pytest.approx(res.best.valid.total, rel=1e-12)
    assert row["rank"] == 1 and row["error"] == ""


def test_order_grid_has_six_rows(matches):
    t_scale = 1.0 / max(e.t for m in matches for e in m)
    rows = grid_search(GridSpec(seqlen=[5], dim_feedforward=[16], order=list(ORDERS)), matches[:2], matches[2:], t_scale, TrainConfig(epochs=1))
    assert sorted(r["order"] for r in rows) == sorted("/".join(o) for o in ORDERS)
    assert all(math.isfinite(r["valid_total"]) for r in rows)
    assert [r["rank"] for r in rows] == list(range(1, 7))


def test_seqlen_grid_both_rows(matches):
    t_scale = 1.0 / max(e.t for m in matches for e in m)
    rows = grid_search(GridSpec(seqlen=[1, 40], dim_feedforward=[16]), matches[:2], matches[2:], t_scale, TrainConfig(epochs=1))
    assert sorted(r["seqlen"] for r in rows) == [1, 40]


def test_failing_cell_recorded_and_ranked_last(matches):
    t_scale = 1.0 / max(e.t for m in matches for e in m)
    # a seqlen longer than any match leaves no training windows
    rows = grid_search(GridSpec(seqlen=[5, 10_000], dim_feedforward=[16]), matches[:2], matches[2:], t_scale, TrainConfig(epochs=1))
    assert rows[-1]["seqlen"] == 10_000 and "no training windows" in rows[-1]["error"]
    assert rows[-1]["valid_total"] == math.inf


def test_published_grid_size():
    n = sum(1 for _ in GridSpec.published().configs())
    assert n == 4 * 15 * 6 * 5 * 5 * 5 * 4 * 4
