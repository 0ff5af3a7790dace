import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conv2d_loops, group_norm_loops, matmul_loops
from symtc import ndgrad as nd
from symtc.gradsuite import TOLERANCES, ndgrad_suite
from symtc.ndgrad import Parameter, Rng, Tape, check_gradients


def test_softmax_single_element():
    assert nd.softmax(np.array([5.0])).value.tolist() == [1.0]


def test_identity_conv_kernel_returns_input():
    x = Rng(1).normal((2, 3, 7, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    assert np.array_equal(nd.conv2d(x, w).value, x)


def test_matmul_matches_triple_loop():
    rng = Rng(2)
    a, b = rng.normal((3, 4)), rng.normal((4, 2))
    assert np.max(np.abs(nd.matmul(a, b).value - matmul_loops(a, b))) <= 1e-12


def test_conv_matches_loop_oracle():
    rng = Rng(3)
    x, w, b = rng.normal((2, 6, 6)), rng.normal((3, 2, 3, 3)), rng.normal(3)
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        got = nd.conv2d(x[None], w, b, stride=stride, padding=pad).value[0]
        assert np.max(np.abs(got - conv2d_loops(x, w, b, pad, stride))) <= 1e-12


def test_group_norm_matches_loop_oracle():
    rng = Rng(4)
    x, g, b = rng.normal((4, 3, 3)), rng.normal(4), rng.normal(4)
    got = nd.group_norm(x[None], 2, g, b).value[0]
    assert np.max(np.abs(got - group_norm_loops(x, 2, g, b))) <= 1e-12


def test_conv_transpose_is_adjoint_of_strided_conv():
    # <conv(x), y> == <x, conv_t(y)> for the same weight
    rng = Rng(5)
    x, y, w = rng.normal((1, 2, 8, 8)), rng.normal((1, 3, 4, 4)), rng.normal((3, 2, 2, 2))
    lhs = np.sum(nd.conv2d(x, w, stride=2, padding=0).value * y)
    rhs = np.sum(x * nd.conv_transpose2d(y, w, stride=2).value)
    assert abs(lhs - rhs) <= 1e-10


def test_sum_gradient_is_ones():
    w = Parameter(Rng(0).normal((3, 2, 4)))
    with Tape() as tape:
        root = nd.sum(w)
    assert np.array_equal(tape.backward(root)[w], np.ones((3, 2, 4)))


def test_sin_gradient_at_known_points():
    w = Parameter(np.array([0.0, np.pi / 2]))
    with Tape() as tape:
        root = nd.sum(nd.sin(w))
    assert np.max(np.abs(tape.backward(root)[w] - [1.0, 0.0])) <= 1e-12


def test_composite_graph_fifty_parameters():
    rng = Rng(6)
    a, b, c = Parameter(rng.normal((5, 4))), Parameter(rng.normal((4, 5))), Parameter(rng.normal(10))
    r = rng.normal((5, 5))

    def loss():
        h = nd.sin(nd.matmul(a, b)) * nd.exp(nd.reshape(c, (2, 5))[0] * 0.3)
        return nd.sum(nd.softmax(h, axis=-1) * r) + nd.sum(c * c) * 0.1

    assert a.size + b.size + c.size == 50
    errs = check_gradients(loss, {"a": a, "b": b, "c": c}, h=1e-5)
    assert max(errs.values()) <= 1e-6


def test_every_kernel_passes_gradcheck():
    errs = ndgrad_suite(0)
    assert len(errs) >= 30
    bad = {k: v for k, v in errs.items() if v > TOLERANCES["ndgrad"]}
    assert not bad, bad


def test_non_scalar_root_rejected():
    w = Parameter(np.ones(3))
    with Tape() as tape:
        y = w * 2.0
    with pytest.raises(nd.TapeError, match="scalar"):
        tape.backward(y)


def test_shape_error_names_both_shapes():
    with pytest.raises(nd.ShapeError) as exc:
        nd.matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


def test_non_finite_output_names_op():
    with pytest.raises(nd.NonFiniteError, match="log"):
        nd.log(np.array([0.0, 1.0]))


def test_values_are_read_only():
    a = nd.as_array(np.ones(3))
    with pytest.raises(ValueError):
        a.value[0] = 2.0


def test_softmax_rows_and_shift_invariance():
    z = Rng(7).normal((6, 9)) * 5
    s = nd.softmax(z).value
    assert np.max(np.abs(s.sum(-1) - 1)) <= 1e-12
    assert np.max(np.abs(nd.softmax(z + 123.4).value - s)) <= 1e-12


def test_grid_sample_identity_and_clamp():
    img = Rng(8).uniform((1, 1, 5, 6))
    ys, xs = np.mgrid[0:5, 0:6].astype(float)
    coords = np.stack([xs, ys], -1)[None]
    assert np.array_equal(nd.grid_sample(img, coords).value, img)
    far = np.full((1, 1, 1, 2), -10.0)
    assert nd.grid_sample(img, far).value[0, 0, 0, 0] == img[0, 0, 0, 0]


def test_resize_nearest_integer_upsample_repeats():
    x = Rng(9).normal((1, 1, 3, 2))
    up = nd.resize(x, (6, 4), mode="nearest").value
    assert np.array_equal(up, np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def test_rng_determinism_and_moments():
    a, b = Rng(42).uniform(1000), Rng(42).uniform(1000)
    assert a.tobytes() == b.tobytes()
    assert Rng(42).normal(1000).tobytes() == Rng(42).normal(1000).tobytes()
    z = Rng(123).normal(1_000_000)
    assert abs(z.mean()) <= 0.01
    assert abs(z.var() - 1.0) <= 0.02


def test_rng_children_are_independent_of_parent_consumption():
    r = Rng(5)
    first = r.child(3).uniform(4)
    r.uniform(100)
    assert np.array_equal(first, r.child(3).uniform(4))


def test_concurrent_tapes_share_parameters():
    w = Parameter(Rng(10).normal((4, 4)))
    results = {}

    def work(k):
        x = Rng(k).normal((3, 4))
        with Tape() as tape:
            root = nd.sum(nd.matmul(x, w) * float(k))
        results[k] = (tape.backward(root)[w], float(k) * x.sum(axis=0)[:, None] * np.ones((1, 4)))

    threads = [threading.Thread(target=work, args=(k,)) for k in range(1, 5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for got, want in results.values():
        assert np.allclose(got, want, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_unbroadcast_gradient_shapes(r, c, seed):
    rng = Rng(seed)
    a = Parameter(rng.normal((r, 1)))
    b = Parameter(rng.normal((1, c)))
    with Tape() as tape:
        root = nd.sum(a * b)
    g = tape.backward(root)
    assert g[a].shape == (r, 1) and g[b].shape == (1, c)
    assert np.allclose(g[a][:, 0], b.value.sum()) and np.allclose(g[b][0], a.value.sum())


def test_operations_are_deterministic():
    def run():
        rng = Rng(11)
        x = rng.normal((1, 2, 8, 8))
        w = rng.normal((3, 2, 3, 3))
        return nd.group_norm(nd.conv2d(x, w, stride=2, padding=1), 3).value

    assert run().tobytes() == run().tobytes()
