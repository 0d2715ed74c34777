"""Reverse-mode automatic differentiation over dense numpy arrays.

Only the operations used by the surrogate networks are provided. Every op
builds its output ``Tensor`` with a closure that pushes the output gradient
back to its parents; ``Tensor.backward`` runs those closures in reverse
topological order.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Tuple

import numpy as np


class Tensor:
    """Array value with an optional gradient buffer and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents: Tuple["Tensor", ...] = (),
                 backward: Optional[Callable[[np.ndarray], None]] = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _t(x, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dt = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dt))


def _make(data, parents, backward) -> Tensor:
    rg = any(p.requires_grad for p in parents)
    return Tensor(data, rg, parents if rg else (), backward if rg else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    b = _t(b, a)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    a = _t(a, b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    a = _t(a, b)
    _check_broadcast(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a = _t(a)
    b = _t(b, a)
    a = _t(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, x.data.dtype.type(0))
    return _make(out, (x,), lambda g: (g * (x.data > 0),))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def sin(x: Tensor) -> Tensor:
    return _make(np.sin(x.data), (x,), lambda g: (g * np.cos(x.data),))


def cos(x: Tensor) -> Tensor:
    return _make(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: (g * 0.5 / out,))


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def clip_min(x: Tensor, lo: float) -> Tensor:
    mask = x.data > lo
    return _make(np.maximum(x.data, lo), (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# reductions and shape


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return _make(out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, key) -> Tensor:
    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, key, g)
        return (out,)
    return _make(x.data[key], (x,), bw)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [_t(x) for x in xs]
    nd = xs[0].ndim
    ax = axis % nd
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ValueError(f"concat: incompatible shapes {xs[0].shape} and {x.shape}")
    sizes = [x.shape[ax] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=ax))
    return _make(np.concatenate([x.data for x in xs], axis=ax), tuple(xs), bw)


def gather(x: Tensor, idx: np.ndarray) -> Tensor:
    """Rows of ``x`` (axis 0) selected by an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx.reshape(-1), g.reshape((-1,) + x.shape[1:]))
        return (out,)
    return _make(x.data[idx], (x,), bw)


def take_along(x: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """``np.take_along_axis`` with a scatter-add backward."""
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        out = np.zeros_like(x.data)
        np.put_along_axis(out, idx, 0, axis)  # shape check only
        out[...] = 0
        _add_along(out, idx, g, axis)
        return (out,)
    return _make(np.take_along_axis(x.data, idx, axis), (x,), bw)


def _add_along(out, idx, g, axis):
    axis = axis % out.ndim
    grids = list(np.indices(idx.shape, sparse=True))
    grids[axis] = idx
    np.add.at(out, tuple(grids), g)


# --------------------------------------------------------------------------
# layers


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make(out, (a, b), bw)


def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W + b`` over the last axis; ``W`` is (in, out)."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ValueError(f"linear: incompatible shapes {x.shape} and {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ValueError(f"linear: bias shape {b.shape} does not match {W.shape}")
    xd = x.data.reshape(-1, W.shape[0])
    out = xd @ W.data
    if b is not None:
        out = out + b.data
    out = out.reshape(x.shape[:-1] + (W.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape)
        gw = xd.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)
    parents = (x, W) if b is None else (x, W, b)
    return _make(out, parents, bw)


def layer_norm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    n = x.shape[-1]

    def bw_x(g):
        return inv * (g - g.mean(axis=-1, keepdims=True)
                      - xh * (g * xh).mean(axis=-1, keepdims=True))

    if gamma is None:
        return _make(xh, (x,), lambda g: (bw_x(g),))
    if gamma.shape != (n,) or beta is None or beta.shape != (n,):
        raise ValueError(f"layer_norm: affine shapes must be ({n},)")
    out = xh * gamma.data + beta.data

    def bw(g):
        gx = bw_x(g * gamma.data)
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xh).sum(axis=lead), g.sum(axis=lead)
    return _make(out, (x, gamma, beta), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return _make(out, (x,), bw)


def max_pool_set(x: Tensor, axis: int) -> Tensor:
    """Max over a set axis; the gradient goes to the first maximal element."""
    axis = axis % x.ndim
    out = x.data.max(axis=axis)

    def bw(g):
        # argmax only when a gradient is needed
        idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis)
        return (gx,)
    return _make(out, (x,), bw)


def normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """``x / |x|`` along ``axis``."""
    nrm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    nrm = np.maximum(nrm, eps)
    y = x.data / nrm

    def bw(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / nrm,)
    return _make(y, (x,), bw)
