import io
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_history
from nmstpp.model import (
    NMSTPP,
    ORDERS,
    EncoderLayer,
    EventEmbedding,
    ModelConfig,
    count_parameters,
    load_checkpoint,
    positional_encode,
    positional_encoding,
    predict_distribution,
    save_checkpoint,
    softmax,
)


def _hist(seqlen=40, n=1, seed=0, dtype=torch.float32):
    return torch.tensor(random_history(np.random.default_rng(seed), n, seqlen), dtype=dtype)


# embedding


def test_zero_embedding_parameters_give_zero_rows():
    emb = EventEmbedding(ModelConfig())
    with torch.no_grad():
        for p in emb.parameters():
            p.zero_()
    assert torch.count_nonzero(emb(_hist(n=3))) == 0


def test_identical_events_embed_identically():
    h = _hist(seqlen=5)
    h[0, 3] = h[0, 1]
    e = EventEmbedding(ModelConfig())(h)
    assert torch.equal(e[0, 1], e[0, 3])


def test_one_hot_dense_weights_select_columns():
    cfg = ModelConfig()
    emb = EventEmbedding(cfg)
    with torch.no_grad():
        emb.dense.weight.zero_()
        emb.dense.bias.zero_()
        # 6 continuous inputs (t + 5 geometry columns) onto the first 6 outputs
        for i in range(6):
            emb.dense.weight[i, i] = 1.0
    h = _hist(seqlen=4, n=2)
    out = emb(h)[..., : cfg.continuous_dense_dim]
    scale = torch.tensor([100, 100, 100, 100, math.pi])
    direct = torch.cat([h[..., :1], h[..., 3:] / scale], dim=-1)
    torch.testing.assert_close(out[..., :6], direct)
    assert torch.count_nonzero(out[..., 6]) == 0
    np.testing.assert_array_equal(out[..., 0].detach().numpy(), h[..., 0].numpy())


@pytest.mark.parametrize("col, bad", [(1, 0), (1, 21), (2, 6)])
def test_out_of_range_ids_rejected(col, bad):
    h = _hist()
    h[0, 0, col] = bad
    with pytest.raises(ValueError, match="out of range"):
        NMSTPP()(h)


# positional encoding


def pe_oracle(seqlen, d):
    z = np.zeros((seqlen, d))
    for n in range(seqlen):
        for col in range(d):
            k = col // 2
            angle = n / 10000 ** (2 * k / d)
            z[n, col] = math.sin(angle) if col % 2 == 0 else math.cos(angle)
    return z


def test_pe_first_row():
    np.testing.assert_array_equal(positional_encoding(3, 6)[0], [0, 1, 0, 1, 0, 1])


def test_pe_zero_exponent_pair():
    np.testing.assert_allclose(positional_encoding(2, 4)[1, :2], [math.sin(1), math.cos(1)], atol=1e-15)


@pytest.mark.parametrize("seqlen, d", [(4, 4), (40, 31), (7, 1), (3, 10)])
def test_pe_matches_scalar_loop(seqlen, d):
    np.testing.assert_allclose(positional_encoding(seqlen, d), pe_oracle(seqlen, d), atol=1e-12)


def test_positional_encode_adds_table():
    x = np.random.default_rng(1).normal(size=(5, 8))
    np.testing.assert_allclose(positional_encode(x) - x, pe_oracle(5, 8), atol=1e-12)


# encoder


def test_seqlen_one_attention_is_identity():
    _, attn = NMSTPP(ModelConfig(seqlen=1))(_hist(seqlen=1))
    np.testing.assert_array_equal(attn.detach().numpy(), [[[1.0]]])


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_attention_rows_sum_to_one(seed, seqlen):
    torch.manual_seed(seed)
    _, attn = NMSTPP(ModelConfig(seqlen=seqlen, dim_feedforward=16))(_hist(seqlen, n=2, seed=seed))
    np.testing.assert_allclose(attn.sum(-1).detach().numpy(), 1.0, atol=1e-6)


def _np(lin):
    return lin.weight.detach().double().numpy(), lin.bias.detach().double().numpy()


def _layer_norm(x, ln):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + ln.eps) * ln.weight.detach().double().numpy() + ln.bias.detach().double().numpy()


def test_encoder_layer_matches_hand_rolled_arithmetic():
    torch.manual_seed(3)
    layer = EncoderLayer(2, 3, 0.0).double()
    x = np.array([[0.3, -1.2], [0.8, 0.5]])
    (wq, bq), (wk, bk), (wv, bv), (wo, bo) = (_np(layer.q), _np(layer.k), _np(layer.v), _np(layer.out))
    (w1, b1), (w2, b2) = _np(layer.ff[0]), _np(layer.ff[3])
    q, k, v = x @ wq.T + bq, x @ wk.T + bk, x @ wv.T + bv
    s = q @ k.T / math.sqrt(2)
    a = np.exp(s - s.max(1, keepdims=True))
    a /= a.sum(1, keepdims=True)
    y = _layer_norm(x + (a @ v) @ wo.T + bo, layer.norm1)
    y = _layer_norm(y + np.maximum(y @ w1.T + b1, 0) @ w2.T + b2, layer.norm2)
    out, attn = layer(torch.tensor(x))
    np.testing.assert_allclose(attn.detach().numpy(), a, atol=1e-12)
    np.testing.assert_allclose(out.detach().numpy(), y, atol=1e-12)


def test_history_vector_is_post_layer_of_last_row():
    torch.manual_seed(0)
    m = NMSTPP(ModelConfig(seqlen=5, dim_feedforward=16)).double()
    h = _hist(seqlen=5, dtype=torch.float64)
    x = m.embed(h) + m.pe.double()
    x, _ = m.layers[0](x)
    expected = m.post(x[:, -1])
    got, _ = m.encode(h)
    torch.testing.assert_close(got, expected)
    assert got.shape == (1, 31)


# forecast heads


def _perturb(module, eps=0.5):
    with torch.no_grad():
        for p in module.parameters():
            p.add_(eps)


def test_independent_mode_t_head_does_not_reach_other_heads():
    torch.manual_seed(0)
    m = NMSTPP(ModelConfig(dependent=False, seqlen=8, dim_feedforward=16))
    h = _hist(seqlen=8, n=4)
    before, _ = m(h)
    _perturb(m.heads["t"])
    after, _ = m(h)
    assert torch.equal(before.z_logits, after.z_logits)
    assert torch.equal(before.m_logits, after.m_logits)
    assert not torch.equal(before.t_hat, after.t_hat)


def test_dependent_mode_m_logits_sensitive_to_t_head():
    torch.manual_seed(0)
    m = NMSTPP(ModelConfig(seqlen=8, dim_feedforward=16)).double()
    h = _hist(seqlen=8, n=4, dtype=torch.float64)
    base, _ = m(h)
    bias = m.heads["t"][-1].bias
    with torch.no_grad():
        bias += 1e-4
    bumped, _ = m(h)
    fd = (bumped.m_logits - base.m_logits) / 1e-4
    assert fd.abs().max() > 1e-6


@pytest.mark.parametrize("order", ORDERS)
def test_head_inputs_follow_the_order(order):
    m = NMSTPP(ModelConfig(order=order, dim_feedforward=16))
    sizes = {"t": 1, "z": 20, "m": 5}
    seen = 0
    for name in order:
        assert m.heads[name][0].in_features == 31 + seen
        seen += sizes[name]


def test_output_shapes():
    out, _ = NMSTPP()(_hist())
    assert (out.t_hat.shape[0], out.z_logits.shape[1], out.m_logits.shape[1]) == (1, 20, 5)


def test_same_window_twice_same_output():
    m = NMSTPP()
    a, _ = m(_hist(seed=4))
    b, _ = m(_hist(seed=4))
    for x, y in zip(a, b):
        assert torch.equal(x, y)


def test_batch_equals_single_window_calls():
    torch.manual_seed(1)
    m = NMSTPP().double().eval()
    h = _hist(n=6, dtype=torch.float64)
    batch, _ = m(h)
    for i in range(6):
        single, _ = m(h[i : i + 1])
        for x, y in zip(batch, single):
            torch.testing.assert_close(x[i : i + 1], y, atol=1e-12, rtol=0)


def test_default_parameter_count_near_published_size():
    n = count_parameters(NMSTPP())
    assert n == 75_518
    assert 0.85 * 79_000 <= n <= 1.15 * 79_000


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(order=("t", "t", "m"))
    with pytest.raises(ValueError):
        ModelConfig(activation="gelu")
    with pytest.raises(ValueError):
        ModelConfig(n_heads=2)


# PMFs


def test_uniform_logits_uniform_pmf():
    np.testing.assert_allclose(softmax(np.zeros(20)), 0.05)
    np.testing.assert_allclose(softmax(np.zeros(5)), 0.2)


def test_saturated_logit_is_one_hot():
    z = np.zeros(5)
    z[3] = 1000.0
    np.testing.assert_allclose(softmax(z), np.eye(5)[3], atol=1e-6)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=30))
def test_softmax_matches_exp_normalize(logits):
    e = [math.exp(v) for v in logits]
    np.testing.assert_allclose(softmax(np.array(logits)), [v / sum(e) for v in e], rtol=1e-9, atol=1e-300)
    assert softmax(np.array(logits)).sum() == pytest.approx(1.0, abs=1e-12)


def test_predict_distribution_rows_normalized():
    out, _ = NMSTPP()(_hist(n=3))
    t, zp, mp = predict_distribution(out)
    assert t.shape == (3,)
    np.testing.assert_allclose(zp.sum(1), 1, atol=1e-12)
    np.testing.assert_allclose(mp.sum(1), 1, atol=1e-12)


# checkpoints


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(2)
    m = NMSTPP(ModelConfig(seqlen=6, dim_feedforward=16))
    save_checkpoint(tmp_path / "c.pt", m, 0.02, "abc", note="x")
    ck = load_checkpoint(tmp_path / "c.pt", m.cfg, "abc")
    h = _hist(seqlen=6, n=2)
    for a, b in zip(m(h)[0], ck.build()(h)[0]):
        assert torch.equal(a, b)
    assert ck.t_scale == 0.02 and ck.extra == {"note": "x"}


def test_checkpoint_mismatches_rejected(tmp_path):
    m = NMSTPP(ModelConfig(seqlen=6, dim_feedforward=16))
    buf = io.BytesIO()
    save_checkpoint(buf, m, 1.0, "abc")
    (tmp_path / "c.pt").write_bytes(buf.getvalue())
    with pytest.raises(ValueError, match="does not match"):
        load_checkpoint(tmp_path / "c.pt", ModelConfig(seqlen=7, dim_feedforward=16))
    with pytest.raises(ValueError, match="zone map"):
        load_checkpoint(tmp_path / "c.pt", zone_map_digest="other")
