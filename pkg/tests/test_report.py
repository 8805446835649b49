import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_history
from nmstpp.artifacts import Provenance, read_csv
from nmstpp.features import ClassWeights, WindowSet
from nmstpp.model import NMSTPP, ForecastOutput, ModelConfig
from nmstpp.report import cdf_compare, confusion, evaluate, export_attention, write_evaluation


def ks_merge_scan(a, b):
    """Walk both sorted samples once and track the largest ECDF gap."""
    a, b = sorted(a), sorted(b)
    i = j = 0
    best = 0.0
    while i < len(a) and j < len(b):
        x = min(a[i], b[j])
        while i < len(a) and a[i] == x:
            i += 1
        while j < len(b) and b[j] == x:
            j += 1
        best = max(best, abs(i / len(a) - j / len(b)))
    return best


def test_identical_samples_zero_ks():
    assert cdf_compare([1, 2, 3], [1, 2, 3]).ks == 0.0


def test_disjoint_samples_ks_one():
    assert cdf_compare([0.0], [1.0]).ks == 1.0


@given(
    st.lists(st.floats(0, 10, allow_subnormal=False), min_size=1, max_size=60),
    st.lists(st.floats(0, 10, allow_subnormal=False), min_size=1, max_size=60),
)
def test_ks_matches_merge_scan(a, b):
    assert cdf_compare(a, b).ks == pytest.approx(ks_merge_scan(a, b), abs=1e-12)


def test_ks_random_samples_with_ties():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 20, 500) / 4, rng.integers(0, 25, 300) / 4
    assert cdf_compare(a, b).ks == pytest.approx(ks_merge_scan(a, b), abs=1e-12)


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        cdf_compare([], [1.0])


def test_oracle_predictor_gives_identity_confusion():
    truth = np.array([1, 2, 3, 1, 3])
    cs = confusion(np.eye(3)[truth - 1], truth, 3)
    np.testing.assert_array_equal(cs.matrix, np.eye(3))
    np.testing.assert_array_equal(cs.accuracy, 1.0)


def test_uniform_predictor_rows_uniform():
    truth = np.array([1, 2, 2, 5])
    cs = confusion(np.full((4, 5), 0.2), truth, 5)
    np.testing.assert_allclose(cs.matrix[cs.present], 0.2)
    assert cs.present.tolist() == [True, True, False, False, True]
    assert np.isnan(cs.matrix[2]).all()


def test_uniform_scorer_cel_action_log5():
    class Uniform:
        def forecast(self, w):
            n = len(w)
            return ForecastOutput(torch.zeros(n, dtype=torch.float64), torch.zeros(n, 20, dtype=torch.float64), torch.zeros(n, 5, dtype=torch.float64))

    w = _windows(12, 4)
    ev = evaluate(Uniform(), w, ClassWeights.uniform())
    assert ev.loss.cel_action == pytest.approx(math.log(5), abs=1e-12)
    np.testing.assert_allclose(ev.action.matrix[ev.action.present], 0.2)


def test_seqlen_one_attention_exports_one():
    assert export_attention(np.ones((3, 1, 1))).tolist() == [1.0]


@given(st.integers(0, 1000), st.integers(1, 10))
def test_exported_attention_sums_to_one(seed, seqlen):
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(4, seqlen, seqlen))
    traces = raw / raw.sum(-1, keepdims=True)
    assert export_attention(traces).sum() == pytest.approx(1.0, abs=1e-6)


def _windows(n, seqlen, seed=0):
    rng = np.random.default_rng(seed)
    h = random_history(rng, n, seqlen)
    return WindowSet(h, rng.uniform(size=n), rng.integers(1, 21, n), rng.integers(1, 6, n), ["m"] * n, np.arange(n))


def test_write_evaluation_artifacts(tmp_path):
    torch.manual_seed(0)
    model = NMSTPP(ModelConfig(seqlen=4, dim_feedforward=16))
    ev = evaluate(model, _windows(20, 4), attention_sample=5)
    assert ev.attention.shape == (5, 4, 4)
    write_evaluation(ev, tmp_path, Provenance("abc123"), plots=True)
    names = {p.name for p in tmp_path.iterdir()}
    for stem in ("loss", "confusion_zone", "confusion_action", "cdf", "attention"):
        assert f"{stem}.csv" in names
    for stem in ("confusion_zone", "confusion_action", "cdf", "attention"):
        assert f"{stem}.svg" in names
    assert not any(n.endswith(".partial") for n in names)
    assert (tmp_path / "loss.csv").read_text().startswith("# nmstpp 0.1.0 config=abc123")
    rows = read_csv(tmp_path / "attention.csv")
    assert sum(float(r["weight"]) for r in rows) == pytest.approx(1.0, abs=1e-6)
