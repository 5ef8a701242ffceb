"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps an ndarray and records the operation that produced it.
Calling ``backward()`` on a scalar result walks the graph in reverse
topological order and accumulates ``.grad`` on every node.

The module-level math functions (``sin``, ``sqrt``, ``atan2``, ...) accept
either plain numbers/arrays or ``Var`` instances, so numeric code written
against them runs unchanged with or without gradient tracking.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Var", "value_of", "is_var", "value_and_grad",
    "sin", "cos", "tanh", "exp", "log", "sqrt", "absolute", "atan2",
    "where", "clip", "mod",
]


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Var:
    __slots__ = ("value", "grad", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward

    def __repr__(self):
        return f"Var({self.value!r})"

    @property
    def shape(self):
        return self.value.shape

    def __len__(self):
        return len(self.value)

    # -- graph traversal ---------------------------------------------------

    def backward(self, seed=None):
        order = []
        seen = set()
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
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=float)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for p, g in zip(node._parents, node._backward(node.grad)):
                if g is None:
                    continue
                g = np.asarray(g, dtype=float)
                if g.shape != p.value.shape:
                    g = _unbroadcast(g, p.value.shape)
                p.grad = g if p.grad is None else p.grad + g

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Var):
            return Var(self.value + other.value, (self, other), lambda g: (g, g))
        return Var(self.value + _const(other), (self,), lambda g: (g,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return Var(self.value - other.value, (self, other), lambda g: (g, -g))
        return Var(self.value - _const(other), (self,), lambda g: (g,))

    def __rsub__(self, other):
        return Var(_const(other) - self.value, (self,), lambda g: (-g,))

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def __mul__(self, other):
        a = self.value
        if isinstance(other, Var):
            b = other.value
            return Var(a * b, (self, other), lambda g: (g * b, g * a))
        b = _const(other)
        return Var(a * b, (self,), lambda g: (g * b,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        a = self.value
        if isinstance(other, Var):
            b = other.value
            return Var(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))
        b = _const(other)
        return Var(a / b, (self,), lambda g: (g / b,))

    def __rtruediv__(self, other):
        a, b = _const(other), self.value
        return Var(a / b, (self,), lambda g: (-g * a / (b * b),))

    def __pow__(self, p):
        if isinstance(p, Var):
            raise TypeError("only constant exponents are supported")
        a = self.value
        return Var(a ** p, (self,), lambda g: (g * p * a ** (p - 1),))

    def __matmul__(self, other):
        a = self.value
        if isinstance(other, Var):
            b = other.value
            return Var(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g))
        b = _const(other)
        return Var(a @ b, (self,), lambda g: (g @ b.T,))

    def __rmatmul__(self, other):
        a, b = _const(other), self.value
        return Var(a @ b, (self,), lambda g: (a.T @ g,))

    def __getitem__(self, idx):
        shape = self.value.shape
        basic = _is_basic_index(idx)

        def back(g):
            out = np.zeros(shape)
            if basic:
                out[idx] = g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return Var(self.value[idx], (self,), back)

    # comparisons act on values and return plain boolean arrays
    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None):
        shape = self.value.shape

        def back(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Var(self.value.sum(axis=axis), (self,), back)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis) / n


def _is_basic_index(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis
               for p in parts)


def _const(x):
    return np.asarray(x, dtype=float)


def is_var(x):
    return isinstance(x, Var)


def value_of(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _unary(x, f, df):
    if not isinstance(x, Var):
        return f(np.asarray(x, dtype=float))
    v = x.value
    out = f(v)
    return Var(out, (x,), lambda g: (g * df(v, out),))


def sin(x):
    return _unary(x, np.sin, lambda v, o: np.cos(v))


def cos(x):
    return _unary(x, np.cos, lambda v, o: -np.sin(v))


def tanh(x):
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)


def exp(x):
    return _unary(x, np.exp, lambda v, o: o)


def log(x):
    return _unary(x, np.log, lambda v, o: 1.0 / v)


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o)


def absolute(x):
    return _unary(x, np.abs, lambda v, o: np.sign(v))


def mod(x, period):
    """``x mod period``; the derivative is 1 almost everywhere."""
    return _unary(x, lambda v: np.mod(v, period), lambda v, o: np.ones_like(v))


def clip(x, lo, hi):
    return _unary(x, lambda v: np.clip(v, lo, hi),
                  lambda v, o: ((v >= lo) & (v <= hi)).astype(float))


def atan2(y, x):
    if not (isinstance(y, Var) or isinstance(x, Var)):
        return np.arctan2(y, x)
    yv, xv = value_of(y), value_of(x)
    r2 = xv * xv + yv * yv
    out = np.arctan2(yv, xv)
    if isinstance(y, Var) and isinstance(x, Var):
        return Var(out, (y, x), lambda g: (g * xv / r2, -g * yv / r2))
    if isinstance(y, Var):
        return Var(out, (y,), lambda g: (g * xv / r2,))
    return Var(out, (x,), lambda g: (-g * yv / r2,))


def where(cond, a, b):
    cond = np.asarray(value_of(cond) if isinstance(cond, Var) else cond, dtype=bool)
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.where(cond, a, b)
    out = np.where(cond, value_of(a), value_of(b))
    parents, masks = [], []
    if isinstance(a, Var):
        parents.append(a)
        masks.append(cond)
    if isinstance(b, Var):
        parents.append(b)
        masks.append(~cond)
    return Var(out, tuple(parents), lambda g: tuple(np.where(m, g, 0.0) for m in masks))


def value_and_grad(fn, *args):
    """Evaluate ``fn(*args)`` and its gradient with respect to every argument.

    ``fn`` must return a scalar. Returns ``(value, [grad_0, grad_1, ...])``.
    """
    xs = [Var(a) for a in args]
    out = fn(*xs)
    if not isinstance(out, Var):
        return float(out), [np.zeros_like(x.value) for x in xs]
    out.backward()
    grads = [np.zeros_like(x.value) if x.grad is None else x.grad for x in xs]
    return float(out.value), grads
