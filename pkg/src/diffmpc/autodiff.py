"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the handful of operations needed by the recurrent cell and the denoiser
are supported. Functions such as :func:`sigmoid` accept plain arrays too and
then return plain arrays without building a graph, so the same layer code
serves both training and inference.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    # keep numpy from broadcasting ndarray (op) Tensor elementwise over objects
    __array_ufunc__ = None

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Propagate gradients from this node to every leaf that requires them."""
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value) if grad is None else grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _plain(*xs):
    return not any(isinstance(x, Tensor) for x in xs)


def param(value) -> Tensor:
    return Tensor(value, requires_grad=True)


def add(a, b):
    if _plain(a, b):
        return a + b
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor(a.value + b.value, (a, b), backward)


def neg(a):
    if _plain(a):
        return -a

    def backward(g):
        a._accumulate(-g)

    return Tensor(-a.value, (a,), backward)


def mul(a, b):
    if _plain(a, b):
        return a * b
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return Tensor(a.value * b.value, (a, b), backward)


def matmul(a, b):
    """Matrix product of a 2-D left operand with a 2-D right operand."""
    if _plain(a, b):
        return a @ b
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return Tensor(a.value @ b.value, (a, b), backward)


def getitem(a, idx):
    if _plain(a):
        return a[idx]

    def backward(g):
        # basic slicing only: no repeated indices, so plain assignment is exact
        full = np.zeros_like(a.value)
        full[idx] = g
        a._accumulate(full)

    return Tensor(a.value[idx], (a,), backward)


def concat(items, axis=-1):
    if _plain(*items):
        return np.concatenate(items, axis=axis)
    items = [_wrap(x) for x in items]
    sizes = np.cumsum([x.shape[axis] for x in items])[:-1]

    def backward(g):
        for x, part in zip(items, np.split(g, sizes, axis=axis)):
            if x.requires_grad:
                x._accumulate(part)

    return Tensor(np.concatenate([x.value for x in items], axis=axis), tuple(items), backward)


def stack_rows(items):
    """Stack equally shaped 2-D blocks along axis 0."""
    return concat(items, axis=0)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    if _plain(a):
        return _sigmoid(np.asarray(a, dtype=float))
    s = _sigmoid(a.value)

    def backward(g):
        a._accumulate(g * s * (1.0 - s))

    return Tensor(s, (a,), backward)


def tanh(a):
    if _plain(a):
        return np.tanh(a)
    t = np.tanh(a.value)

    def backward(g):
        a._accumulate(g * (1.0 - t * t))

    return Tensor(t, (a,), backward)


def silu(a):
    if _plain(a):
        a = np.asarray(a, dtype=float)
        return a * _sigmoid(a)
    s = _sigmoid(a.value)

    def backward(g):
        a._accumulate(g * s * (1.0 + a.value * (1.0 - s)))

    return Tensor(a.value * s, (a,), backward)


def mse(pred, target):
    """Mean squared error against a constant target array."""
    if _plain(pred):
        return float(np.mean((pred - target) ** 2))
    diff = pred.value - target
    n = diff.size

    def backward(g):
        pred._accumulate(g * 2.0 * diff / n)

    return Tensor(np.mean(diff * diff), (pred,), backward)


class Adam:
    """Adam over a dict of parameter arrays, updated in place."""

    def __init__(self, params: dict, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, clip=None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> float:
        """Apply one update; returns the global gradient norm before clipping."""
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        factor = 1.0
        if self.clip is not None and norm > self.clip:
            factor = self.clip / norm
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k] * factor
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return norm
