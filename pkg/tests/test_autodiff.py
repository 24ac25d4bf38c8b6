import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dawn import autodiff as ad
from dawn import ops
from oracles import central_difference, rel_error

BOUND = 1e-7


def check(fn, *inputs, cot_seed=0):
    """Compare reverse-mode gradients of sum(cot * fn(*inputs)) with central differences."""
    xs = [np.array(x, dtype=np.float64) for x in inputs]
    leaves = [ad.Var(x) for x in xs]
    out = fn(*leaves)
    cot = np.random.default_rng(cot_seed).normal(size=ad.value(out).shape)
    ad.sum_(ad.mul(out, cot)).backward()
    for leaf, x in zip(leaves, xs):
        numeric = central_difference(lambda: float(np.sum(cot * ad.value(fn(*xs)))), x)
        assert rel_error(leaf.grad, numeric) < BOUND


@pytest.mark.parametrize(
    "fn",
    [ad.exp, ad.tanh, ad.sigmoid, ad.softplus, lambda a: ad.power(ad.add(ad.mul(a, a), 1.0), 1.5), lambda a: ad.log(ad.add(ad.mul(a, a), 0.5))],
)
def test_elementwise(fn, rng):
    check(fn, rng.normal(size=(3, 4)))


def test_binary_with_broadcast(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
    check(ad.add, a, b)
    check(ad.sub, a, b)
    check(ad.mul, a, b)
    check(lambda x, y: ad.div(x, ad.add(ad.mul(y, y), 1.0)), a, b)


def test_matmul_shapes(rng):
    check(ad.matmul, rng.normal(size=(3, 4)), rng.normal(size=(4, 2)))
    check(ad.matmul, rng.normal(size=(3, 4)), rng.normal(size=(4,)))
    check(ad.matmul, rng.normal(size=(4,)), rng.normal(size=(4, 2)))


def test_reductions_and_indexing(rng):
    x = rng.normal(size=(2, 3, 4))
    check(lambda a: ad.sum_(a, axis=(0, 2)), x)
    check(lambda a: ad.mean(a, axis=1, keepdims=True), x)
    check(lambda a: ad.getitem(a, (slice(0, 1), 2)), x)
    check(lambda a: ad.broadcast_to(ad.reshape(ad.getitem(a, (0, 0)), (4,)), (5, 4)), x)
    check(lambda a, b: ad.stack([a, b, a]), rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))


def test_composites(rng):
    x = rng.normal(size=7)
    check(ad.softmax, x)
    check(lambda a: ad.layer_norm(a, np.linspace(0.5, 2, 7), 0.1), x)
    check(ad.cosine_sim, x, rng.normal(size=7))


def test_relu_away_from_kink(rng):
    x = rng.normal(size=(4, 4))
    x[np.abs(x) < 0.1] = 0.5
    check(ad.relu, x)


def test_spatial_ops(rng):
    check(lambda x, w: ad.conv2d(x, w, 2), rng.normal(size=(7, 7, 2)), rng.normal(size=(3, 3, 2, 3)))
    check(ad.xcorr, rng.normal(size=(6, 6, 3)), rng.normal(size=(2, 2, 3)))
    check(lambda x: ad.avgpool(x, 3, 2), rng.normal(size=(7, 7, 2)))


def test_maxpool_without_ties(rng):
    x = rng.permutation(98).reshape(7, 7, 2) * 0.1
    check(lambda a: ad.maxpool(a, 3, 2), x)


def test_softmax_input_gradient_sums_to_zero(rng):
    x = ad.Var(rng.normal(size=(5, 5)))
    ad.sum_(ad.mul(ad.softmax(x), rng.normal(size=(5, 5)))).backward()
    assert abs(x.grad.sum()) < 1e-12


def test_reused_node_accumulates():
    x = ad.Var(np.array(3.0))
    y = ad.mul(x, x)
    ad.add(y, y).backward()
    assert float(x.grad) == 12.0


def test_plain_arrays_pass_through():
    out = ad.mul(np.ones(3), 2.0)
    assert isinstance(out, np.ndarray) and not ad.is_var(out)
    np.testing.assert_array_equal(ad.xcorr(np.ones((3, 3, 1)), np.ones((2, 2, 1))), ops.xcorr_valid(np.ones((3, 3, 1)), np.ones((2, 2, 1))))


def test_clamp_rounding_passes_gradient_through():
    x = ad.Var(np.array([0.0, 1.0, 2.0]))
    ad.sum_(ad.clamp_rounding(x, np.zeros(3), np.full(3, 1.5))).backward()
    np.testing.assert_array_equal(x.grad, np.ones(3))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_forward_values_match_numpy(values):
    x = np.array(values)
    np.testing.assert_allclose(ad.value(ad.tanh(ad.Var(x))), np.tanh(x), rtol=0, atol=0)
    np.testing.assert_allclose(ad.value(ad.softmax(ad.Var(x))), ops.softmax(x), rtol=0, atol=1e-15)


def test_sqrt_at_zero_has_zero_gradient():
    x = ad.Var(np.array([0.0, 4.0]))
    ad.sum_(ad.sqrt(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.25])
