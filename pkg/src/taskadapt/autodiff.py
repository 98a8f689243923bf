"""Reverse-mode automatic differentiation over dense float64 tensors.

Graphs are built define-by-run: every operation returns a new node that
records its inputs and a vector-Jacobian closure. ``backward`` walks the
nodes reachable from a scalar loss in reverse creation order, so each node
is processed after all of its consumers and gradient contributions from
multiple consumers accumulate by summation. All reductions use a fixed
summation order, which keeps repeated runs bit-reproducible.
"""

from __future__ import annotations

import itertools

import numpy as np

_SEQ = itertools.count()


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class Tensor:
    """A node of the computation graph holding a float64 ndarray.

    Leaves wrap raw values; interior nodes cache the forward result of the
    operation that created them. ``grad`` is populated by ``backward`` for
    every node with ``requires_grad`` reachable from the loss.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_inputs", "_vjp", "_seq")

    def __init__(self, data, requires_grad=False, op="leaf", _inputs=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._inputs = _inputs
        self._vjp = _vjp
        self._seq = next(_SEQ)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return _reduce_sum(self, axis)

    def mean(self, axis=None):
        return _reduce_mean(self, axis)

    def min(self, axis=None):
        return _reduce_extremum(self, axis, "min")

    def max(self, axis=None):
        return _reduce_extremum(self, axis, "max")

    def reshape(self, shape):
        return reshape(self, shape)

    def flatten(self):
        return flatten(self)

    def backward(self):
        backward(self)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(op, data, inputs, vjp) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    return Tensor(data, requires_grad=requires, op=op,
                  _inputs=inputs if requires else (),
                  _vjp=vjp if requires else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were created or stretched by broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if squeezed:
        g = g.sum(axis=squeezed, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic primitives

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node("add", data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node("sub", data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node("mul", data, (a, b), vjp)


def neg(a) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (-g,)

    return _node("neg", -a.data, (a,), vjp)


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node("matmul", data, (a, b), vjp)


# ---------------------------------------------------------------------------
# elementwise nonlinearities

def tanh(x) -> Tensor:
    x = _coerce(x)
    out = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _node("tanh", out, (x,), vjp)


def sigmoid(x) -> Tensor:
    x = _coerce(x)
    # tanh form is stable for large |x| and gives exactly 0.5 at zero
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _node("sigmoid", out, (x,), vjp)


def relu(x) -> Tensor:
    x = _coerce(x)
    mask = x.data > 0.0

    def vjp(g):
        return (g * mask,)

    # np.maximum keeps NaN, so a poisoned forward pass stays visibly non-finite
    return _node("relu", np.maximum(x.data, 0.0), (x,), vjp)


def softplus(x) -> Tensor:
    x = _coerce(x)
    out = np.logaddexp(0.0, x.data)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def vjp(g):
        return (g * s,)

    return _node("softplus", out, (x,), vjp)


def log(x) -> Tensor:
    x = _coerce(x)

    def vjp(g):
        return (g / x.data,)

    return _node("log", np.log(x.data), (x,), vjp)


def clamp(x, lo, hi) -> Tensor:
    """Clip values into [lo, hi]; gradient passes only where no clipping bound."""
    x = _coerce(x)
    data = np.clip(x.data, lo, hi)
    mask = (x.data > lo) & (x.data < hi)

    def vjp(g):
        return (g * mask,)

    return _node("clamp", data, (x,), vjp)


def row_softmax(x) -> Tensor:
    """Softmax along axis 1 of a 2-D tensor, numerically stabilized per row."""
    x = _coerce(x)
    if x.ndim != 2:
        raise ShapeError(f"row_softmax: expected a 2-D tensor, got shape {x.shape}")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        gp = g * out
        return (gp - out * gp.sum(axis=1, keepdims=True),)

    return _node("row_softmax", out, (x,), vjp)


# ---------------------------------------------------------------------------
# reductions

def _reduce_sum(x, axis) -> Tensor:
    x = _coerce(x)
    data = x.data.sum(axis=axis)
    shape = x.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _node("sum", data, (x,), vjp)


def _reduce_mean(x, axis) -> Tensor:
    x = _coerce(x)
    data = x.data.mean(axis=axis)
    shape = x.shape
    count = x.size if axis is None else shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis) / count, shape),)

    return _node("mean", data, (x,), vjp)


def _reduce_extremum(x, axis, kind) -> Tensor:
    x = _coerce(x)
    fn = np.min if kind == "min" else np.max
    data = fn(x.data, axis=axis)

    def vjp(g):
        if axis is None:
            flat_idx = x.data.argmin() if kind == "min" else x.data.argmax()
            out = np.zeros_like(x.data)
            out.reshape(-1)[flat_idx] = g
            return (out,)
        expanded = np.expand_dims(data, axis)
        mask = x.data == expanded
        # route the gradient to the first extremum along the axis only
        first = mask & (np.cumsum(mask, axis=axis) == 1)
        return (np.where(first, np.expand_dims(g, axis), 0.0),)

    return _node(kind, data, (x,), vjp)


# ---------------------------------------------------------------------------
# shape ops

def reshape(x, shape) -> Tensor:
    x = _coerce(x)
    old = x.shape

    def vjp(g):
        return (g.reshape(old),)

    return _node("reshape", x.data.reshape(shape), (x,), vjp)


def flatten(x) -> Tensor:
    """Row-major flatten to a 1-D tensor."""
    x = _coerce(x)
    return reshape(x, (x.size,))


def concat1d(parts) -> Tensor:
    """Concatenate 1-D tensors (scalars are treated as length-1)."""
    parts = [_coerce(p) for p in parts]
    datas = [p.data.reshape(-1) for p in parts]
    sizes = [d.size for d in datas]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i]:offsets[i + 1]].reshape(parts[i].shape)
                     for i in range(len(parts)))

    return _node("concat1d", np.concatenate(datas), tuple(parts), vjp)


# ---------------------------------------------------------------------------
# domain-specific primitives

def pairwise_sqdist(a, b) -> Tensor:
    """Matrix of squared Euclidean distances between rows of ``a`` and ``b``.

    For a of shape (n, d) and b of shape (k, d) the result has shape (n, k).
    The d squared differences of each entry are sorted before summation, so
    the output is bit-identical under any common permutation of the feature
    coordinates of both inputs.
    """
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"pairwise_sqdist: shapes {a.shape} and {b.shape} do not share a feature width")
    diff = a.data[:, None, :] - b.data[None, :, :]
    sq = diff * diff
    # contiguous sorted layout pins the reduction tree, keeping the sum
    # bit-identical no matter how the caller's arrays are strided
    out = np.ascontiguousarray(np.sort(sq, axis=2)).sum(axis=2)

    def vjp(g):
        w = g[:, :, None] * diff
        return 2.0 * w.sum(axis=1), -2.0 * w.sum(axis=0)

    return _node("pairwise_sqdist", out, (a, b), vjp)


def gradient_reversal(x) -> Tensor:
    """Identity on the forward pass; negates the gradient on the backward pass."""
    x = _coerce(x)

    def vjp(g):
        return (-g,)

    return _node("gradient_reversal", x.data, (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable grad-tracked node."""
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.ndim != 0:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    order = []
    seen = {id(loss)}
    stack = [loss]
    while stack:
        t = stack.pop()
        order.append(t)
        for p in t._inputs:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
    order.sort(key=lambda t: t._seq, reverse=True)

    for t in order:
        t.grad = None
    loss.grad = np.ones((), dtype=np.float64)

    for t in order:
        if t._vjp is None or t.grad is None:
            continue
        for p, g in zip(t._inputs, t._vjp(t.grad)):
            if not p.requires_grad or g is None:
                continue
            p.grad = g if p.grad is None else p.grad + g
