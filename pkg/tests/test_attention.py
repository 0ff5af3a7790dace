import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rmha_loops, softmax_row
from symtc import ndgrad as nd
from symtc.attention import (
    ClassicParams,
    RpeParams,
    TokenSet,
    classic_mhsa,
    classic_scores,
    content_keys,
    content_queries,
    decomposition_terms,
    rmha_output,
    rpe_dot_block,
    rpe_dot_closed,
    rpe_key,
    rpe_query,
    rpe_scores,
)
from symtc.gradsuite import TOLERANCES, rmha_suite
from symtc.ndgrad import Parameter, Rng


def _params(d=8, heads=2, seed=0, **kw):
    return RpeParams(d, heads, Rng(seed), **kw)


def _set_zero(params, *names):
    for n in names:
        arr = getattr(params, n)
        setattr(params, n, Parameter(np.zeros(arr.shape)))


def test_tokenset_validation():
    with pytest.raises(ValueError):
        TokenSet(np.zeros((3, 4)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        TokenSet(np.zeros((0, 4)), np.zeros((0, 2)))
    ts = TokenSet(np.ones((2, 4)), np.zeros((2, 2)))
    assert np.array_equal(ts.shifted([1, 2]).p, [[1, 2], [1, 2]])


def test_d_model_must_split_into_heads():
    with pytest.raises(ValueError):
        RpeParams(10, 3)


# -- classic baseline ----------------------------------------------------------

def test_classic_single_token_weight_one():
    prm = ClassicParams(4, 2, Rng(0))
    x = Rng(1).normal((1, 4))
    assert np.array_equal(classic_scores(x, prm).value, np.ones((2, 1, 1)))
    want = (x @ prm.value.value) @ prm.out.weight.value + prm.out.bias.value
    assert np.allclose(classic_mhsa(x, prm).value, want, atol=1e-14)


def test_classic_identical_tokens_split_evenly():
    prm = ClassicParams(4, 2, Rng(0))
    x = np.tile(Rng(1).normal((1, 4)), (2, 1))
    assert np.allclose(classic_scores(x, prm).value, 0.5, atol=1e-15)


def test_classic_matches_dense_loop():
    rng = Rng(2)
    prm = ClassicParams(6, 2, rng)
    x, pos = rng.normal((5, 6)), rng.normal((5, 6))
    z = x + pos
    q, k, v = z @ prm.query.value, z @ prm.key.value, z @ prm.value.value
    out = np.zeros((5, 6))
    for h in range(2):
        sl = slice(3 * h, 3 * h + 3)
        for i in range(5):
            a = softmax_row([float(q[i, sl] @ k[j, sl]) / np.sqrt(3) for j in range(5)])
            out[i, sl] = sum(a[j] * v[j, sl] for j in range(5))
    want = out @ prm.out.weight.value + prm.out.bias.value
    assert np.max(np.abs(classic_mhsa(x, prm, pos).value - want)) <= 1e-12


def test_classic_rejects_mismatched_positions():
    prm = ClassicParams(4, 2)
    with pytest.raises(nd.ShapeError):
        classic_mhsa(np.ones((3, 4)), prm, np.ones((2, 4)))


def test_decomposition_special_cases():
    rng = Rng(3)
    prm = ClassicParams(6, 3, rng)
    x, pos = rng.normal((4, 6)), rng.normal((4, 6))
    cc, cp, pp = decomposition_terms(x, prm, np.zeros((4, 6)))
    assert not cp.value.any() and not pp.value.any()
    cc, cp, pp = decomposition_terms(np.zeros((4, 6)), prm, pos)
    assert not cc.value.any() and not cp.value.any() and pp.value.any()


def test_decomposition_sums_to_direct_expansion():
    rng = Rng(4)
    prm = ClassicParams(6, 2, rng)
    x, pos = rng.normal((5, 6)), rng.normal((5, 6))
    cc, cp, pp = decomposition_terms(x, prm, pos)
    z = x + pos
    q, k = z @ prm.query.value, z @ prm.key.value
    direct = np.stack([q[:, :3] @ k[:, :3].T, q[:, 3:] @ k[:, 3:].T])
    assert np.max(np.abs(cc.value + cp.value + pp.value - direct)) <= 1e-10


# -- relative position attention -------------------------------------------------

def test_query_blocks_at_origin():
    prm = _params(qk_mode="linear")
    x = Rng(5).normal((1, 8))
    c = content_queries(x, prm).value
    q = rpe_query(x, np.zeros((1, 2)), prm).value
    dh = prm.d_head
    assert np.array_equal(q[..., :dh], c) and np.array_equal(q[..., 2 * dh:3 * dh], c)
    assert not q[..., dh:2 * dh].any() and not q[..., 3 * dh:].any()


def test_query_with_zero_frequencies_depends_on_phase_only():
    prm = _params(qk_mode="linear")
    _set_zero(prm, "freq_1", "freq_2")
    prm.phase_1 = Parameter(Rng(6).normal(prm.d_head))
    x = Rng(7).normal((1, 8))
    qa = rpe_query(x, np.array([[0.3, -0.9]]), prm).value
    qb = rpe_query(x, np.array([[-0.7, 0.2]]), prm).value
    assert np.array_equal(qa, qb)
    c = content_queries(x, prm).value
    assert np.allclose(qa[..., :prm.d_head], c * np.cos(prm.phase_1.value), atol=1e-15)


def test_key_blocks_at_origin_and_zero_content():
    prm = _params(qk_mode="linear")
    dh = prm.d_head
    x = Rng(8).normal((1, 8))
    k = rpe_key(x, np.zeros((1, 2)), prm).value
    assert np.array_equal(k[..., :dh], content_keys(x, prm).value)
    assert not k[..., dh:2 * dh].any()
    assert np.array_equal(k[..., 2 * dh:3 * dh], np.ones_like(k[..., :dh]))
    assert not k[..., 3 * dh:].any()
    p = np.array([[0.4, -0.2]])
    k0 = rpe_key(np.zeros((1, 8)), p, prm).value
    assert not k0[..., :2 * dh].any()
    pw2 = p @ prm.freq_2.value
    assert np.allclose(k0[0, 0, 2 * dh:], np.concatenate([np.cos(pw2[0]), np.sin(pw2[0])]), atol=1e-15)


def test_query_key_blocks_scalar_loop():
    prm = _params(qk_mode="linear", seed=9)
    rng = Rng(10)
    x, p = rng.normal((3, 8)), rng.uniform((3, 2), -1, 1)
    q, k = rpe_query(x, p, prm).value, rpe_key(x, p, prm).value
    c, e = content_queries(x, prm).value, content_keys(x, prm).value
    w1, w2, b1, b2 = prm.freq_1.value, prm.freq_2.value, prm.phase_1.value, prm.phase_2.value
    dh = prm.d_head
    for h in range(prm.heads):
        for i in range(3):
            for t in range(dh):
                a1 = p[i, 0] * w1[0, t] + p[i, 1] * w1[1, t]
                a2 = p[i, 0] * w2[0, t] + p[i, 1] * w2[1, t]
                want_q = [c[h, i, t] * np.cos(a1 + b1[t]), c[h, i, t] * np.sin(a1 + b1[t]),
                          c[h, i, t] * np.cos(a2 + b2[t]), c[h, i, t] * np.sin(a2 + b2[t])]
                want_k = [e[h, i, t] * np.cos(a1), e[h, i, t] * np.sin(a1), np.cos(a2), np.sin(a2)]
                for blk in range(4):
                    assert abs(q[h, i, blk * dh + t] - want_q[blk]) <= 1e-12
                    assert abs(k[h, i, blk * dh + t] - want_k[blk]) <= 1e-12


def test_dot_reduces_without_positions():
    prm = _params(qk_mode="linear")
    _set_zero(prm, "freq_1", "freq_2")
    rng = Rng(11)
    xi, xj = rng.normal(8), rng.normal(8)
    c = content_queries(xi[None], prm).value[0, 0]
    e = content_keys(xj[None], prm).value[0, 0]
    want = float(np.sum(c * e) + np.sum(c))
    assert abs(rpe_dot_closed(xi, xj, [0.5, -0.3], prm) - want) <= 1e-12
    prm2 = _params(qk_mode="linear")
    assert abs(rpe_dot_closed(xi, xj, [0.0, 0.0], prm2) - (np.sum(
        content_queries(xi[None], prm2).value[0, 0] * content_keys(xj[None], prm2).value[0, 0])
        + np.sum(content_queries(xi[None], prm2).value[0, 0]))) <= 1e-12


@pytest.mark.parametrize("qk", ["mlp", "linear"])
@pytest.mark.parametrize("pp", ["shared", "per_head"])
def test_block_and_closed_forms_agree(qk, pp):
    rng = Rng(12)
    for _ in range(20):
        prm = RpeParams(8, 2, rng.child(int(rng.integers(0, 1 << 30))), qk_mode=qk, position_params=pp)
        prm.phase_1 = Parameter(rng.normal(prm.phase_1.shape))
        prm.phase_2 = Parameter(rng.normal(prm.phase_2.shape))
        x, p = rng.normal((2, 8)), rng.uniform((2, 2), -1, 1)
        q, k = rpe_query(x, p, prm).value, rpe_key(x, p, prm).value
        for h in range(2):
            blk = rpe_dot_block(q[h, 0], k[h, 1])
            closed = rpe_dot_closed(x[0], x[1], p[0] - p[1], prm, head=h)
            assert abs(blk - closed) <= 1e-10 * max(1.0, abs(closed))


def test_scores_single_token_and_rows():
    prm = _params()
    assert np.array_equal(rpe_scores(Rng(0).normal((1, 8)), np.zeros((1, 2)), prm).value, np.ones((2, 1, 1)))
    s = rpe_scores(Rng(1).normal((7, 8)), Rng(2).uniform((7, 2), -1, 1), prm).value
    assert np.max(np.abs(s.sum(-1) - 1)) <= 1e-9 and s.min() >= 0 and s.max() <= 1


def test_scores_match_closed_form_softmax():
    prm = _params(qk_mode="linear", seed=13)
    rng = Rng(14)
    x, p = rng.normal((6, 8)), rng.uniform((6, 2), -1, 1)
    s = rpe_scores(x, p, prm).value
    for h in range(2):
        for i in range(6):
            row = softmax_row([rpe_dot_closed(x[i], x[j], p[i] - p[j], prm, h) / np.sqrt(prm.d_head)
                               for j in range(6)])
            assert np.max(np.abs(s[h, i] - row)) <= 1e-12


def test_output_matches_index_loop_oracle():
    prm = _params(qk_mode="linear", seed=15)
    rng = Rng(16)
    prm.phase_1 = Parameter(rng.normal(prm.d_head))
    prm.phase_2 = Parameter(rng.normal(prm.d_head))
    prm.position_out.weight = Parameter(rng.normal(prm.position_out.weight.shape))
    prm.position_out.bias = Parameter(rng.normal(8))
    x, p = rng.normal((5, 8)), rng.uniform((5, 2), -1, 1)
    want = rmha_loops(x, p, prm.query.value, prm.key.value, prm.value.value, prm.freq_1.value,
                      prm.freq_2.value, prm.phase_1.value, prm.phase_2.value, 2,
                      prm.content_out.weight.value, prm.content_out.bias.value,
                      prm.position_out.weight.value, prm.position_out.bias.value)
    assert np.max(np.abs(rmha_output(x, p, prm).value - want)) <= 1e-12


def test_single_token_output_is_linear_of_value():
    prm = _params()
    prm.position_out.weight = Parameter(Rng(0).normal(prm.position_out.weight.shape))
    x = Rng(1).normal((1, 8))
    want = (x @ prm.value.value) @ prm.content_out.weight.value + prm.content_out.bias.value
    assert np.allclose(rmha_output(x, np.array([[0.3, 0.1]]), prm).value, want, atol=1e-14)


@pytest.mark.parametrize("term", ["per_head", "global"])
def test_translation_invariance(term):
    rng = Rng(17)
    prm = _params(position_term=term)
    prm.position_out.weight = Parameter(rng.normal(prm.position_out.weight.shape))
    x, p = rng.normal((2, 6, 8)), rng.uniform((6, 2), -1, 1)
    delta = np.array([3.7, -12.25])
    assert np.max(np.abs(rpe_scores(x, p, prm).value - rpe_scores(x, p + delta, prm).value)) <= 1e-9
    assert np.max(np.abs(rmha_output(x, p, prm).value - rmha_output(x, p + delta, prm).value)) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    rng = Rng(seed)
    prm = _params(seed=seed % 7)
    prm.position_out.weight = Parameter(rng.normal(prm.position_out.weight.shape))
    x, p = rng.normal((5, 8)), rng.uniform((5, 2), -1, 1)
    perm = rng.permutation(5)
    out = rmha_output(x, p, prm).value
    assert np.allclose(rmha_output(x[perm], p[perm], prm).value, out[perm], atol=1e-12)


def test_rmha_gradients():
    errs = rmha_suite(0)
    assert max(errs.values()) <= TOLERANCES["rmha"], errs
