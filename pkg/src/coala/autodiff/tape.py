"""Reverse-mode differentiation over numpy arrays.

Operations on ``Tensor`` objects are recorded on a ``Tape`` in creation order.
``Tape.gradients`` replays the records backwards once, accumulating adjoints,
and then marks the tape consumed.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax as _log_softmax


class TapeError(RuntimeError):
    """Raised on misuse of a tape (reuse after consumption, mixed tapes)."""


class Tape:
    def __init__(self):
        self._nodes: list[Tensor] = []
        self.consumed = False

    def leaf(self, value) -> "Tensor":
        return self._record(np.asarray(value, dtype=np.float64), (), None)

    def _record(self, value, parents, vjp) -> "Tensor":
        if self.consumed:
            raise TapeError("tape has already been consumed by a backward pass")
        t = Tensor(value, self, len(self._nodes), parents, vjp)
        self._nodes.append(t)
        return t

    def gradients(self, loss: "Tensor", leaves) -> list[np.ndarray]:
        """Gradients of scalar ``loss`` for every tensor in ``leaves``."""
        if self.consumed:
            raise TapeError("tape has already been consumed by a backward pass")
        if loss.tape is not self:
            raise TapeError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ValueError("loss must be a scalar")
        self.consumed = True
        adj: dict[int, np.ndarray] = {loss.idx: np.ones_like(loss.value)}
        for node in reversed(self._nodes[: loss.idx + 1]):
            g = adj.get(node.idx)
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if parent is None or pg is None:
                    continue
                if parent.idx in adj:
                    adj[parent.idx] = adj[parent.idx] + pg
                else:
                    adj[parent.idx] = pg
        out = []
        for leaf in leaves:
            g = adj.get(leaf.idx)
            out.append(np.zeros_like(leaf.value) if g is None else np.broadcast_to(g, leaf.shape).copy())
        return out


def grad_reverse(loss: "Tensor", params) -> list[np.ndarray]:
    """Gradients of ``loss`` for each tensor in ``params``; unused leaves get zeros."""
    return loss.tape.gradients(loss, params)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("value", "tape", "idx", "parents", "vjp")
    __array_ufunc__ = None

    def __init__(self, value, tape, idx, parents, vjp):
        self.value = value
        self.tape = tape
        self.idx = idx
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _val(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def _tape_of(*xs) -> Tape:
    tapes = {id(x.tape): x.tape for x in xs if isinstance(x, Tensor)}
    if len(tapes) != 1:
        raise TapeError("operands must come from exactly one tape")
    return next(iter(tapes.values()))


def _node(value, parents, vjp) -> Tensor:
    tape = _tape_of(*parents)
    parents = tuple(p if isinstance(p, Tensor) else None for p in parents)
    return tape._record(value, parents, vjp)


def _maybe_node(value, inputs, vjp):
    if not any(isinstance(x, Tensor) for x in inputs):
        return value
    return _node(value, inputs, vjp)


def add(x, y):
    xv, yv = _val(x), _val(y)
    return _maybe_node(xv + yv, (x, y), lambda g: (unbroadcast(g, xv.shape), unbroadcast(g, yv.shape)))


def sub(x, y):
    xv, yv = _val(x), _val(y)
    return _maybe_node(xv - yv, (x, y), lambda g: (unbroadcast(g, xv.shape), -unbroadcast(g, yv.shape)))


def mul(x, y):
    xv, yv = _val(x), _val(y)
    return _maybe_node(xv * yv, (x, y),
                       lambda g: (unbroadcast(g * yv, xv.shape), unbroadcast(g * xv, yv.shape)))


def div(x, y):
    xv, yv = _val(x), _val(y)
    out = xv / yv
    return _maybe_node(out, (x, y),
                       lambda g: (unbroadcast(g / yv, xv.shape), unbroadcast(-g * out / yv, yv.shape)))


def neg(x):
    return _maybe_node(-_val(x), (x,), lambda g: (-g,))


def power(x, p: float):
    xv = _val(x)
    return _maybe_node(xv ** p, (x,), lambda g: (g * p * xv ** (p - 1),))


def square(x):
    xv = _val(x)
    return _maybe_node(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def matmul(x, y):
    """Matrix product with numpy broadcasting; both operands at least 2-d."""
    xv, yv = _val(x), _val(y)
    if xv.ndim < 2 or yv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-d")

    def vjp(g):
        gx = unbroadcast(g @ np.swapaxes(yv, -1, -2), xv.shape)
        gy = unbroadcast(np.swapaxes(xv, -1, -2) @ g, yv.shape)
        return gx, gy
    return _maybe_node(xv @ yv, (x, y), vjp)


def exp(x):
    out = np.exp(_val(x))
    return _maybe_node(out, (x,), lambda g: (g * out,))


def expm1(x):
    xv = _val(x)
    return _maybe_node(np.expm1(xv), (x,), lambda g: (g * np.exp(xv),))


def log(x):
    xv = _val(x)
    return _maybe_node(np.log(xv), (x,), lambda g: (g / xv,))


def sigmoid(x):
    out = expit(_val(x))
    return _maybe_node(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x):
    out = np.tanh(_val(x))
    return _maybe_node(out, (x,), lambda g: (g * (1.0 - out * out),))


def sqrt(x):
    out = np.sqrt(_val(x))
    return _maybe_node(out, (x,), lambda g: (0.5 * g / out,))


def softplus(x):
    xv = _val(x)
    return _maybe_node(np.logaddexp(0.0, xv), (x,), lambda g: (g * expit(xv),))


def maximum(x, y):
    xv, yv = _val(x), _val(y)
    pick = xv >= yv
    return _maybe_node(np.maximum(xv, yv), (x, y),
                       lambda g: (unbroadcast(g * pick, xv.shape), unbroadcast(g * ~pick, yv.shape)))


def minimum(x, y):
    xv, yv = _val(x), _val(y)
    pick = xv <= yv
    return _maybe_node(np.minimum(xv, yv), (x, y),
                       lambda g: (unbroadcast(g * pick, xv.shape), unbroadcast(g * ~pick, yv.shape)))


def clip(x, lo: float, hi: float):
    xv = _val(x)
    inside = (xv >= lo) & (xv <= hi)
    return _maybe_node(np.clip(xv, lo, hi), (x,), lambda g: (g * inside,))


def where(cond, x, y):
    cond = np.asarray(cond, dtype=bool)
    xv, yv = _val(x), _val(y)
    return _maybe_node(np.where(cond, xv, yv), (x, y),
                       lambda g: (unbroadcast(np.where(cond, g, 0.0), xv.shape),
                                  unbroadcast(np.where(cond, 0.0, g), yv.shape)))


def sum_(x, axis=None, keepdims=False):
    xv = _val(x)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape),)
    return _maybe_node(np.sum(xv, axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis=None, keepdims=False):
    xv = _val(x)
    count = xv.size if axis is None else int(np.prod([xv.shape[a] for a in np.atleast_1d(axis)]))
    return sum_(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape):
    xv = _val(x)
    return _maybe_node(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def getitem(x, key):
    xv = _val(x)

    def vjp(g):
        out = np.zeros_like(xv)
        np.add.at(out, key, g)
        return (out,)
    return _maybe_node(xv[key], (x,), vjp)


def concatenate(xs, axis: int = -1):
    vals = [_val(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))
    return _maybe_node(out, tuple(xs), vjp)


def log_softmax(x, axis: int = -1):
    out = _log_softmax(_val(x), axis=axis)

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)
    return _maybe_node(out, (x,), vjp)


def take_along_axis(x, idx, axis: int):
    xv = _val(x)
    idx = np.asarray(idx)

    def vjp(g):
        full = np.zeros_like(xv)
        _add_along_axis(full, idx, g, axis)
        return (full,)
    return _maybe_node(np.take_along_axis(xv, idx, axis), (x,), vjp)


def _add_along_axis(out: np.ndarray, idx: np.ndarray, g: np.ndarray, axis: int):
    axis = axis % out.ndim
    grids = np.indices(idx.shape, sparse=True)
    full_idx = tuple(idx if d == axis else grids[d] for d in range(out.ndim))
    np.add.at(out, full_idx, g)


def scan(a, u, h0=None):
    """Linear recurrence ``h_t = a_t * h_{t-1} + u_t`` along axis -2.

    ``a`` and ``u`` have shape ``(..., L, d)``; ``h0`` (default zero) has
    shape ``(..., d)``.  Returns all states ``(..., L, d)``.
    """
    av, uv = _val(a), _val(u)
    shape = np.broadcast_shapes(av.shape, uv.shape)
    av = np.broadcast_to(av, shape)
    length = shape[-2]
    h0v = np.zeros(shape[:-2] + shape[-1:]) if h0 is None else np.broadcast_to(_val(h0), shape[:-2] + shape[-1:])
    hs = np.empty(shape)
    h = h0v
    for t in range(length):
        h = av[..., t, :] * h + uv[..., t, :]
        hs[..., t, :] = h

    def vjp(g):
        acc = np.zeros(shape[:-2] + shape[-1:])
        ga = np.empty(shape)
        gu = np.empty(shape)
        for t in range(length - 1, -1, -1):
            acc = g[..., t, :] + acc
            gu[..., t, :] = acc
            prev = hs[..., t - 1, :] if t > 0 else h0v
            ga[..., t, :] = acc * prev
            acc = acc * av[..., t, :]
        gh0 = None if h0 is None else unbroadcast(acc, _val(h0).shape)
        return unbroadcast(ga, _val(a).shape), unbroadcast(gu, _val(u).shape), gh0

    parents = (a, u) if h0 is None else (a, u, h0)
    return _maybe_node(hs, parents, lambda g: vjp(g)[: len(parents)])
