from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tea_lab import autodiff as ad


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(b))))


def grad_of(build, value):
    """Reverse-mode gradient of a scalar graph w.r.t. one parameter."""
    p = ad.param(value)
    ad.backward(build(p))
    return p.grad


def fd_of(build, value, step=1e-5):
    return ad.finite_difference_gradient(lambda v: float(build(ad.const(v)).value), value, step)


def test_tensor_rejects_nonfinite_and_bad_shapes():
    with pytest.raises(ad.NonFiniteError):
        ad.tensor([1.0, np.nan])
    with pytest.raises(ad.NonFiniteError):
        ad.tensor([np.inf])
    with pytest.raises(ad.ShapeError):
        ad.tensor([1, 2, 3], shape=(2, 2))
    with pytest.raises(ad.ShapeError):
        ad.tensor([], shape=(0,))
    t = ad.tensor([1, 2, 3, 4], shape=(2, 2))
    assert t.dtype == np.float64 and t.shape == (2, 2)


def test_tensor_copies_input():
    raw = np.ones(3)
    t = ad.tensor(raw)
    raw[0] = 5.0
    assert t[0] == 1.0


def test_matmul_examples():
    a = ad.const([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(a, ad.const(np.eye(2))).value, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(ad.matmul(ad.const([[1.0, 2.0]]), ad.const([[3.0], [4.0]])).value, [[11.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(ad.const(np.ones((2, 3))), ad.const(np.ones((2, 3))))


def test_matmul_gradients_match_finite_differences():
    g = np.random.default_rng(0)
    A, B = g.standard_normal((3, 4)), g.standard_normal((4, 2))
    W = g.standard_normal((3, 2))
    f_a = lambda a: ad.sum(ad.mul(ad.matmul(a, ad.const(B)), ad.const(W)))
    f_b = lambda b: ad.sum(ad.mul(ad.matmul(ad.const(A), b), ad.const(W)))
    assert rel_err(grad_of(f_a, A), fd_of(f_a, A)) < 1e-6
    assert rel_err(grad_of(f_b, B), fd_of(f_b, B)) < 1e-6
    # closed form: d/dA sum(W * (A B)) = W B^T
    np.testing.assert_allclose(grad_of(f_a, A), W @ B.T, rtol=1e-12)


def test_elementwise_values():
    assert ad.sigmoid(ad.const(np.zeros((1, 1)))).value[0, 0] == 0.5
    assert ad.tanh(ad.const(np.zeros((1, 1)))).value[0, 0] == 0.0
    assert ad.scale(ad.const([[2.0]]), -1.5).value[0, 0] == -3.0


def test_sigmoid_is_stable_for_large_inputs():
    v = ad.sigmoid(ad.const([[1000.0, -1000.0]])).value
    np.testing.assert_array_equal(v, [[1.0, 0.0]])


def test_hadamard_gradient():
    g = np.random.default_rng(1)
    A, B = g.standard_normal((2, 3)), g.standard_normal((2, 3))
    f = lambda a: ad.sum(ad.mul(a, ad.const(B)))
    assert rel_err(grad_of(f, A), fd_of(f, A)) < 1e-6
    np.testing.assert_array_equal(grad_of(f, A), B)


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_binary_ops_refuse_to_broadcast(op):
    with pytest.raises(ad.ShapeError):
        getattr(ad, op)(ad.const(np.ones((2, 3))), ad.const(np.ones((1, 3))))


@pytest.mark.parametrize("fn, deriv", [
    (ad.sigmoid, lambda v: (s := 1 / (1 + np.exp(-v))) * (1 - s)),
    (ad.tanh, lambda v: 1 - np.tanh(v) ** 2),
    (ad.log, lambda v: 1 / v),
])
def test_unary_local_derivatives(fn, deriv):
    v = np.random.default_rng(2).uniform(0.2, 2.0, size=(3, 2))
    np.testing.assert_allclose(grad_of(lambda p: ad.sum(fn(p)), v), deriv(v), rtol=1e-12)


def test_clip_gradient_is_zero_outside_range():
    v = np.array([[-2.0, 0.5, 3.0]])
    np.testing.assert_array_equal(grad_of(lambda p: ad.sum(ad.clip(p, 0.0, 1.0)), v), [[0.0, 1.0, 0.0]])


def test_mean_value_and_gradient():
    p = ad.param([[1.0, 2.0, 3.0]])
    m = ad.mean(p)
    assert float(m.value) == 2.0
    ad.backward(m)
    np.testing.assert_allclose(p.grad, [[1 / 3, 1 / 3, 1 / 3]], rtol=1e-15)


def test_sum_gradient_matches_finite_differences():
    A = np.random.default_rng(3).standard_normal((4, 4))
    f = lambda a: ad.sum(ad.mul(a, a))
    assert rel_err(grad_of(f, A), fd_of(f, A)) < 1e-6


def test_concat_then_slice_round_trip():
    a, b = ad.const([[1.0, 2.0]]), ad.const([[3.0, 4.0]])
    c = ad.concat_rows([a, b])
    assert c.shape == (2, 2)
    np.testing.assert_array_equal(ad.slice_rows(c, 0, 1).value, a.value)
    np.testing.assert_array_equal(ad.slice_rows(c, 1, 2).value, b.value)


def test_concat_and_slice_are_exact_adjoints():
    g = np.random.default_rng(4)
    a, b = ad.param(g.standard_normal((2, 3))), ad.param(g.standard_normal((3, 3)))
    w = g.standard_normal((2, 3))
    ad.backward(ad.sum(ad.mul(ad.slice_rows(ad.concat_rows([a, b]), 1, 3), ad.const(w))))
    np.testing.assert_array_equal(a.grad, np.vstack([np.zeros((1, 3)), w[:1]]))
    np.testing.assert_array_equal(b.grad, np.vstack([w[1:], np.zeros((2, 3))]))


def test_slice_out_of_range():
    with pytest.raises(IndexError):
        ad.slice_rows(ad.const(np.ones((3, 1))), 2, 4)
    with pytest.raises(IndexError):
        ad.slice_rows(ad.const(np.ones((3, 1))), 2, 2)


def test_concat_rejects_mismatched_columns():
    with pytest.raises(ad.ShapeError):
        ad.concat_rows([ad.const(np.ones((1, 2))), ad.const(np.ones((1, 3)))])


def test_transpose_and_reshape_gradients():
    A = np.random.default_rng(5).standard_normal((2, 3))
    W = np.arange(6.0).reshape(3, 2)
    f = lambda a: ad.sum(ad.mul(ad.transpose(a), ad.const(W)))
    np.testing.assert_array_equal(grad_of(f, A), W.T)
    f2 = lambda a: ad.sum(ad.mul(ad.reshape(a, (3, 2)), ad.const(W)))
    np.testing.assert_array_equal(grad_of(f2, A), W.reshape(2, 3))
    with pytest.raises(ad.ShapeError):
        ad.reshape(ad.const(A), (4, 2))


def test_backward_examples():
    x = ad.param([[3.0]])
    ad.backward(ad.sum(ad.mul(x, x)))
    assert x.grad[0, 0] == 6.0
    w = ad.param([[0.0]])
    ad.backward(ad.sum(ad.sigmoid(ad.matmul(w, ad.const([[1.0]])))))
    assert w.grad[0, 0] == 0.25


def test_backward_rejects_non_scalar_root():
    with pytest.raises(ad.ShapeError):
        ad.backward(ad.param(np.ones((2, 1))))


def test_fan_out_sums_contributions():
    x = ad.param([[1.7]])
    ad.backward(ad.sum(ad.add(x, x)))
    assert x.grad[0, 0] == 2.0


def test_gradients_accumulate_until_zeroed():
    x = ad.param([[2.0]])
    root = ad.sum(ad.mul(x, x))
    ad.backward(root)
    ad.backward(root)
    assert x.grad[0, 0] == 8.0
    ad.zero_gradients([x])
    assert x.grad[0, 0] == 0.0
    ad.backward(root)
    assert x.grad[0, 0] == 4.0


def test_backward_on_constant_graph_is_a_no_op():
    ad.backward(ad.sum(ad.const(np.ones((2, 2)))))


def test_shared_subgraph_visited_once():
    # diamond: h = tanh(x); root = sum(h*h + h)
    x0 = np.array([[0.3, -0.8]])
    f = lambda x: ad.sum(ad.add(ad.mul(ad.tanh(x), ad.tanh(x)), ad.tanh(x)))
    x = ad.param(x0)
    h = ad.tanh(x)
    ad.backward(ad.sum(ad.add(ad.mul(h, h), h)))
    t = np.tanh(x0)
    np.testing.assert_allclose(x.grad, (2 * t + 1) * (1 - t * t), rtol=1e-12)
    assert rel_err(x.grad, fd_of(f, x0)) < 1e-8


def test_finite_difference_examples():
    g = ad.finite_difference_gradient(lambda v: float(v[0] ** 2), np.array([3.0]), 1e-5)
    assert abs(g[0] - 6.0) < 1e-8
    x = np.random.default_rng(6).standard_normal((2, 3))
    np.testing.assert_allclose(ad.finite_difference_gradient(lambda v: float(v.sum()), x), np.ones((2, 3)), atol=1e-9)
    with pytest.raises(ValueError):
        ad.finite_difference_gradient(lambda v: 0.0, x, step=0.0)


def test_quadratic_loss_gradient_matches_analytic():
    g = np.random.default_rng(7)
    yhat, y = g.standard_normal((4, 3)), g.standard_normal((4, 3))
    f = lambda p: ad.sum(ad.mul(ad.sub(p, ad.const(y)), ad.sub(p, ad.const(y))))
    np.testing.assert_allclose(grad_of(f, yhat), 2 * (yhat - y), rtol=1e-12)
    np.testing.assert_allclose(fd_of(f, yhat), 2 * (yhat - y), atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_composite_graphs_match_finite_differences(seed):
    g = np.random.default_rng(seed)
    W = g.uniform(-1, 1, (3, 4))
    X = g.uniform(-1, 1, (4, 2))
    V = g.uniform(-1, 1, (3, 2))

    def build(w):
        h = ad.tanh(ad.matmul(w, ad.const(X)))
        s = ad.sigmoid(ad.add(h, ad.const(V)))
        c = ad.concat_rows([s, ad.scale(h, 0.5)])
        return ad.mean(ad.mul(c, c))

    assert rel_err(grad_of(build, W), fd_of(build, W)) < 1e-5
