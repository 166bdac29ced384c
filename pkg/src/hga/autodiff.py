"""Minimal reverse-mode autodiff on float64 numpy arrays.

Only the operations needed by the adapter forward pass and losses are
implemented. Values are always ndarray (scalars are 0-d arrays).
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum over leading extra axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def backward(self) -> None:
        """Accumulate gradients of self (must be scalar) into the graph."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order = []
        seen = set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        for t in order:
            t.grad = np.zeros_like(t.value)
        if not self.requires_grad:
            return
        self.grad = np.ones_like(self.value)
        for t in reversed(order):
            if t._backward is not None:
                t._backward(t.grad)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)

        def bwd(g):
            _accum(self, _unbroadcast(g, self.shape))
            _accum(other, _unbroadcast(g, other.shape))

        return Tensor(self.value + other.value, parents=(self, other), backward=bwd)

    __radd__ = __add__

    def __neg__(self):
        def bwd(g):
            _accum(self, -g)

        return Tensor(-self.value, parents=(self,), backward=bwd)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def bwd(g):
            _accum(self, _unbroadcast(g * other.value, self.shape))
            _accum(other, _unbroadcast(g * self.value, other.shape))

        return Tensor(self.value * other.value, parents=(self, other), backward=bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)

        def bwd(g):
            _accum(self, _unbroadcast(g / other.value, self.shape))
            _accum(other, _unbroadcast(-g * self.value / (other.value ** 2), other.shape))

        return Tensor(self.value / other.value, parents=(self, other), backward=bwd)

    def __matmul__(self, other):
        other = as_tensor(other)

        def bwd(g):
            _accum(self, g @ other.value.T)
            _accum(other, self.value.T @ g)

        return Tensor(self.value @ other.value, parents=(self, other), backward=bwd)

    # -- shape ops -----------------------------------------------------
    @property
    def T(self):
        def bwd(g):
            _accum(self, g.T)

        return Tensor(self.value.T, parents=(self,), backward=bwd)

    def sum(self, axis=None, keepdims: bool = False):
        def bwd(g):
            if axis is None:
                _accum(self, np.broadcast_to(g, self.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                _accum(self, np.broadcast_to(gg, self.shape).copy())

        return Tensor(self.value.sum(axis=axis, keepdims=keepdims),
                      parents=(self,), backward=bwd)

    def gather_rows(self, idx: np.ndarray):
        idx = np.asarray(idx, dtype=np.intp)

        def bwd(g):
            out = np.zeros_like(self.value)
            np.add.at(out, idx, g)
            _accum(self, out)

        return Tensor(self.value[idx], parents=(self,), backward=bwd)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def bwd(g):
        _accum(x, g * (x.value > 0.0))

    return Tensor(np.maximum(x.value, 0.0), parents=(x,), backward=bwd)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.value)

    def bwd(g):
        _accum(x, g * (1.0 - out ** 2))

    return Tensor(out, parents=(x,), backward=bwd)


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.value)

    def bwd(g):
        _accum(x, g * out)

    return Tensor(out, parents=(x,), backward=bwd)


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def bwd(g):
        _accum(x, g / x.value)

    return Tensor(np.log(x.value), parents=(x,), backward=bwd)


def sqrt(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.value)

    def bwd(g):
        _accum(x, g * 0.5 / out)

    return Tensor(out, parents=(x,), backward=bwd)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    na = a.shape[1]

    def bwd(g):
        _accum(a, g[:, :na])
        _accum(b, g[:, na:])

    return Tensor(np.concatenate([a.value, b.value], axis=1),
                  parents=(a, b), backward=bwd)
