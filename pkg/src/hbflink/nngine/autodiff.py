"""Tape-free reverse-mode differentiation over numpy arrays.

Each :class:`Tensor` remembers its parents and a closure mapping the
output gradient to parent gradients. :func:`backward` walks the graph in
reverse topological order. Complex quantities are carried as pairs of real
tensors (:class:`CTensor`), so every derivative here is an ordinary real
derivative.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeError, UsageError


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "param")

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False, param=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swap_last(self)

    def detach(self) -> "Tensor":
        return Tensor(self.value)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, fn) -> Tensor:
    parents = [p for p in parents]
    if any(p.requires_grad for p in parents):
        return Tensor(value, parents, fn, requires_grad=True)
    return Tensor(value)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value + b.value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value - b.value, (a, b), lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (unbroadcast(g * b.value, a.shape), unbroadcast(g * a.value, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return _make(out, (a, b),
                 lambda g: (unbroadcast(g / b.value, a.shape), unbroadcast(-g * out / b.value, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def _unary(a, f, df) -> Tensor:
    a = as_tensor(a)
    out = f(a.value)
    return _make(out, (a,), lambda g: (g * df(a.value, out),))


def exp(a):
    return _unary(a, np.exp, lambda x, y: y)


def log(a):
    return _unary(a, np.log, lambda x, y: 1.0 / x)


def sqrt(a):
    return _unary(a, np.sqrt, lambda x, y: 0.5 / y)


def square(a):
    return _unary(a, np.square, lambda x, y: 2.0 * x)


def cos(a):
    return _unary(a, np.cos, lambda x, y: -np.sin(x))


def sin(a):
    return _unary(a, np.sin, lambda x, y: np.cos(x))


def tanh(a):
    return _unary(a, np.tanh, lambda x, y: 1.0 - y * y)


def _sigm(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    return _unary(a, _sigm, lambda x, y: y * (1.0 - y))


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))


def identity(a):
    return as_tensor(a)


# --- shape ops ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError("matmul needs at least 2-D operands")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.value, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.value, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else unbroadcast(ga, a.shape),
                None if gb is None else unbroadcast(gb, b.shape))

    return _make(a.value @ b.value, (a, b), back)


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), back)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swap_last(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def back(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g) if _fancy(idx) else out.__setitem__(idx, g)
        return (out,)

    return _make(a.value[idx], (a,), back)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.value for t in ts], axis=axis), ts, back)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(np.stack([t.value for t in ts], axis=axis), ts, back)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(np.broadcast_to(a.value, shape), (a,), lambda g: (unbroadcast(g, a.shape),))


# --- fused ops --------------------------------------------------------------


def sigmoid_bce_with_logits(logits, labels) -> Tensor:
    """Batch mean of per-sample summed BCE, computed stably from logits."""
    z = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeError(f"labels {y.shape} vs logits {z.shape}")
    zv = z.value
    per = np.maximum(zv, 0) - zv * y + np.log1p(np.exp(-np.abs(zv)))
    n = zv.shape[0] if zv.ndim else 1
    out = per.sum() / n

    def back(g):
        return (g * (_sigm(zv) - y) / n,)

    return _make(out, (z,), back)


def where(mask, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    m = np.asarray(mask, dtype=bool)
    return _make(np.where(m, a.value, b.value), (a, b),
                 lambda g: (unbroadcast(np.where(m, g, 0.0), a.shape), unbroadcast(np.where(m, 0.0, g), b.shape)))


# --- complex pairs ----------------------------------------------------------


class CTensor:
    """Complex tensor as a pair of real tensors."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = as_tensor(re)
        self.im = as_tensor(im)

    @classmethod
    def const(cls, z) -> "CTensor":
        z = np.asarray(z)
        return cls(Tensor(z.real.astype(np.float64)), Tensor(z.imag.astype(np.float64)))

    @property
    def shape(self):
        return self.re.shape

    @property
    def value(self) -> np.ndarray:
        return self.re.value + 1j * self.im.value

    def __add__(self, o: "CTensor") -> "CTensor":
        return CTensor(self.re + o.re, self.im + o.im)

    def __sub__(self, o: "CTensor") -> "CTensor":
        return CTensor(self.re - o.re, self.im - o.im)

    def __matmul__(self, o: "CTensor") -> "CTensor":
        return cmatmul(self, o)

    def scale(self, s) -> "CTensor":
        """Multiply by a real tensor/array that broadcasts."""
        return CTensor(self.re * s, self.im * s)

    @property
    def H(self) -> "CTensor":
        return CTensor(swap_last(self.re), neg(swap_last(self.im)))

    def __getitem__(self, idx) -> "CTensor":
        return CTensor(self.re[idx], self.im[idx])

    def reshape(self, shape) -> "CTensor":
        return CTensor(reshape(self.re, shape), reshape(self.im, shape))

    def abs2(self) -> Tensor:
        return self.re * self.re + self.im * self.im

    def detach(self) -> "CTensor":
        return CTensor(self.re.detach(), self.im.detach())


def cmatmul(a: CTensor, b: CTensor) -> CTensor:
    return CTensor(a.re @ b.re - a.im @ b.im, a.re @ b.im + a.im @ b.re)


def cvec(a: CTensor) -> CTensor:
    """Column-major vectorization of the last two axes."""
    r = swap_last(a.re)
    i = swap_last(a.im)
    shape = a.shape[:-2] + (a.shape[-1] * a.shape[-2],)
    return CTensor(reshape(r, shape), reshape(i, shape))


def cunvec(v: CTensor, rows: int, cols: int) -> CTensor:
    lead = v.shape[:-1]
    return CTensor(swap_last(reshape(v.re, lead + (cols, rows))), swap_last(reshape(v.im, lead + (cols, rows))))


def to_real(v: CTensor) -> Tensor:
    """``[Re(v), Im(v)]`` along the last axis."""
    return concat([v.re, v.im], axis=-1)


def from_real(x: Tensor) -> CTensor:
    n = x.shape[-1] // 2
    return CTensor(x[..., :n], x[..., n:])


# --- driver ---------------------------------------------------------------


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root: Tensor, grad=None) -> None:
    """Accumulate d(root)/d(leaf) into every reachable leaf.

    Leaves bound to a store parameter add their gradient into that
    parameter's gradient slot.
    """
    if not root.requires_grad:
        raise UsageError("backward called on a tensor that does not depend on any trainable input")
    root.grad = np.ones_like(root.value) if grad is None else np.asarray(grad, dtype=np.float64)
    for node in reversed(_topo(root)):
        g = node.grad
        if g is None:
            continue
        if node.backward_fn is not None:
            pgrads = node.backward_fn(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                p.grad = pg if p.grad is None else p.grad + pg
            node.grad = None  # free intermediates
        elif node.param is not None:
            node.param.accumulate(g)
