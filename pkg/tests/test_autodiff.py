"""Tape correctness against central finite differences and closed forms."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hga import autodiff as ad
from hga.autodiff import Tensor


def fd_gradient(f, x, h=1e-6):
    """Central-difference gradient of scalar f at flat array x."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_quadratic_probe():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = x * x
    y.backward()
    assert float(y.value) == 9.0
    assert float(x.grad) == pytest.approx(6.0, abs=1e-12)


def test_backward_requires_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_add_unbroadcast():
    a = Tensor(np.ones((3, 1)), requires_grad=True)
    b = Tensor(np.ones((3, 4)), requires_grad=True)
    out = (a + b).sum()
    out.backward()
    assert a.grad.shape == (3, 1)
    np.testing.assert_array_equal(a.grad, np.full((3, 1), 4.0))
    np.testing.assert_array_equal(b.grad, np.ones((3, 4)))


def test_composite_expression_matches_finite_differences():
    rng = np.random.default_rng(0)
    A0 = rng.normal(size=(4, 3))
    B0 = rng.normal(size=(3, 4))
    idx = np.array([0, 2, 2, 3])

    def forward(avec):
        A = Tensor(avec.reshape(4, 3), requires_grad=True)
        B = Tensor(B0)
        M = ad.relu(A @ B)
        N = ad.tanh(M) + ad.exp(M * 0.1)
        R = ad.sqrt(N + 1.0) / (N.sum(axis=1, keepdims=True) + 2.0)
        S = ad.log(R + 1.0).gather_rows(idx)
        out = ad.concat_cols(S, S.T @ Tensor(np.ones((4, 4))) @ S)
        loss = (out * out).sum() + (out.sum(axis=0) * 0.5).sum()
        return A, loss

    A, loss = forward(A0.ravel())
    loss.backward()
    numeric = fd_gradient(lambda v: float(forward(v)[1].value), A0.ravel().copy())
    np.testing.assert_allclose(A.grad.ravel(), numeric, rtol=1e-6, atol=1e-8)


def test_gather_rows_scatter_accumulates():
    x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = x.gather_rows(np.array([1, 1, 0])).sum()
    out.backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])


def test_division_gradients():
    a = Tensor(np.array([6.0]), requires_grad=True)
    b = Tensor(np.array([2.0]), requires_grad=True)
    out = (a / b).sum()
    out.backward()
    assert a.grad[0] == pytest.approx(0.5)
    assert b.grad[0] == pytest.approx(-1.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=10_000))
def test_product_gradient_is_other_factor(n, seed):
    rng = np.random.default_rng(seed)
    xv, yv = rng.normal(size=n), rng.normal(size=n)
    x, y = Tensor(xv, requires_grad=True), Tensor(yv, requires_grad=True)
    (x * y).sum().backward()
    np.testing.assert_allclose(x.grad, yv, rtol=1e-12)
    np.testing.assert_allclose(y.grad, xv, rtol=1e-12)


def test_diamond_reuse_accumulates():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x + x * 3.0
    y.backward()
    assert float(x.grad) == pytest.approx(7.0)
