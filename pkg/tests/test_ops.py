import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dawn import ops
from oracles import hand_softmax, naive_avgpool, naive_conv2d, naive_xcorr

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def xcorr_pair(draw):
    n = draw(st.integers(1, 8))
    m = draw(st.integers(1, min(n, 4)))
    c = draw(st.integers(1, 3))
    f = draw(arrays(np.float64, (n, n, c), elements=finite))
    t = draw(arrays(np.float64, (m, m, c), elements=finite))
    return f, t


def test_xcorr_paper_shape():
    assert ops.xcorr_valid(np.ones((22, 22, 4)), np.ones((6, 6, 4))).shape == (17, 17)


def test_xcorr_zero_input():
    out = ops.xcorr_valid(np.zeros((5, 5, 2)), np.arange(8.0).reshape(2, 2, 2))
    assert np.all(out == 0)


def test_xcorr_unit_kernel_scales():
    f = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    out = ops.xcorr_valid(f, np.array([5.0]).reshape(1, 1, 1))
    np.testing.assert_array_equal(out, [[5, 10], [15, 20]])


@given(xcorr_pair())
def test_xcorr_matches_loop_oracle(pair):
    f, t = pair
    np.testing.assert_allclose(ops.xcorr_valid(f, t), naive_xcorr(f, t), rtol=0, atol=1e-10)


def test_xcorr_errors_name_both_shapes():
    with pytest.raises(ops.ShapeError, match=r"\(3, 3, 2\).*\(2, 2, 3\)"):
        ops.xcorr_valid(np.ones((3, 3, 2)), np.ones((2, 2, 3)))
    with pytest.raises(ops.ShapeError, match=r"\(2, 2, 1\).*\(3, 3, 1\)"):
        ops.xcorr_valid(np.ones((2, 2, 1)), np.ones((3, 3, 1)))


def test_xcorr_scaling_keeps_argmax(rng):
    f = rng.normal(size=(7, 7, 2))
    t = rng.normal(size=(3, 3, 2))
    base = np.argmax(ops.xcorr_valid(f, t))
    for lam in (0.01, 3.0, 1e4):
        assert np.argmax(ops.xcorr_valid(lam * f, t)) == base


def test_conv2d_matches_loop_oracle(rng):
    for stride in (1, 2, 3):
        x = rng.normal(size=(9, 8, 3))
        w = rng.normal(size=(3, 2, 3, 4))
        np.testing.assert_allclose(ops.conv2d(x, w, stride), naive_conv2d(x, w, stride), atol=1e-12)


def test_avgpool_examples():
    f = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    np.testing.assert_array_equal(ops.avgpool(f, 2, 1), np.array([[[2.5]]]))
    x = np.random.default_rng(0).normal(size=(4, 5, 3))
    np.testing.assert_array_equal(ops.avgpool(x, 1, 1), x)
    np.testing.assert_allclose(ops.avgpool(np.full((5, 5, 2), 1.7), 3, 2), 1.7, rtol=0, atol=1e-15)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 3), st.data())
def test_avgpool_matches_loop_oracle(n, window, stride, data):
    window = min(window, n)
    f = data.draw(arrays(np.float64, (n, n, 2), elements=finite))
    out = ops.avgpool(f, window, stride)
    assert out.shape[:2] == ((n - window) // stride + 1,) * 2
    np.testing.assert_allclose(out, naive_avgpool(f, window, stride), rtol=0, atol=1e-9)


def test_avgpool_full_window_is_global_mean(rng):
    f = rng.normal(size=(6, 6, 3))
    np.testing.assert_allclose(ops.avgpool(f, 6, 1)[0, 0], f.mean(axis=(0, 1)), atol=1e-12)


def test_avgpool_errors():
    with pytest.raises(ops.ShapeError):
        ops.avgpool(np.ones((3, 3, 1)), 4, 1)
    with pytest.raises(ValueError):
        ops.avgpool(np.ones((3, 3, 1)), 2, 0)


def test_maxpool_picks_window_max():
    f = np.arange(16.0).reshape(4, 4, 1)
    np.testing.assert_array_equal(ops.maxpool(f, 2, 2)[..., 0], [[5, 7], [13, 15]])


def test_softmax2d_examples():
    np.testing.assert_allclose(ops.softmax2d(np.zeros((3, 4))), 1 / 12, rtol=0, atol=1e-15)
    np.testing.assert_allclose(ops.softmax2d(np.array([[0.0, math.log(3.0)]])), [[0.25, 0.75]], rtol=0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-300, 300)))
def test_softmax2d_properties(r):
    out = ops.softmax2d(r)
    assert np.all(out > 0) and np.all(out <= 1)
    assert abs(out.sum() - 1) < 1e-9
    np.testing.assert_allclose(ops.softmax2d(r + 17.5), out, rtol=0, atol=1e-9)


@given(arrays(np.float64, (3, 4), elements=st.floats(-20, 20)))
def test_softmax2d_matches_hand_formula(r):
    np.testing.assert_allclose(ops.softmax2d(r), hand_softmax(r), rtol=0, atol=1e-9)


def test_softmax_extreme_inputs_stay_finite():
    out = ops.softmax2d(np.array([[1000.0, 999.0], [-1000.0, 0.0]]))
    assert np.all(np.isfinite(out)) and abs(out.sum() - 1) < 1e-12


def test_cosine_examples():
    u = np.array([1.0, 2.0, -3.0])
    assert ops.cosine_sim(u, u) == pytest.approx(1.0, abs=1e-9)
    assert ops.cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 4.0])) == pytest.approx(0.0, abs=1e-9)
    assert ops.cosine_sim(np.zeros(3), u) == 0.0
    with pytest.raises(ops.ShapeError):
        ops.cosine_sim(np.ones(2), np.ones(3))


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_cosine_in_range(u, v):
    assert -1.0 <= ops.cosine_sim(u, v) <= 1.0


def test_hann_window_positive_and_peaked():
    for size in (1, 4, 17):
        w = ops.hann2d(size)
        assert w.shape == (size, size) and np.all(w > 0)
    w = ops.hann2d(17)
    assert np.unravel_index(np.argmax(w), w.shape) == (8, 8)
    np.testing.assert_array_equal(w, w.T)


def test_ops_are_pure(rng):
    f = rng.normal(size=(6, 6, 3))
    t = rng.normal(size=(2, 2, 3))
    before = f.copy(), t.copy()
    a = ops.xcorr_valid(f, t)
    b = ops.xcorr_valid(f, t)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(f, before[0])
    np.testing.assert_array_equal(t, before[1])
