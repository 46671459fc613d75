"""Forward-mode dual numbers over numpy arrays, nestable to second order.

A ``Dual`` carries a primal ``value`` with shape ``S`` and a ``tangent`` with
shape ``S + (k,)`` holding ``k`` directional derivatives at once.  Values and
tangents may themselves be duals of a lower level, which is how second
derivatives are obtained.  Every dual is tagged with a level so that
perturbations from different nesting depths are never confused: an operation
mixing levels treats the lower-level operand as a constant of the higher one.
"""
from __future__ import annotations

from contextvars import ContextVar

import numpy as np
from scipy.special import expit

MAX_DEPTH = 2

# level of the innermost differentiation currently running in this context
_ACTIVE = ContextVar("active_level", default=0)


class NestingDepthError(RuntimeError):
    """Raised when forward-mode differentiation is nested too deeply."""


class NonFiniteError(FloatingPointError):
    """Raised when a differentiated computation produces inf or nan."""


class Dual:
    __slots__ = ("value", "tangent", "level")
    # refuse numpy ufuncs so unsupported primitives fail loudly
    __array_ufunc__ = None

    def __init__(self, value, tangent, level: int):
        self.value = value
        self.tangent = tangent
        self.level = level

    @property
    def shape(self) -> tuple:
        return shape_of(self.value)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def width(self) -> int:
        return shape_of(self.tangent)[-1]

    def __repr__(self) -> str:
        return f"Dual(level={self.level}, value={primal(self)!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return Dual(-self.value, -self.tangent, self.level)

    def __pos__(self):
        return self

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matvec(self, other)

    def __getitem__(self, key):
        key = key if isinstance(key, tuple) else (key,)
        tkey = key + (slice(None),) if any(k is Ellipsis for k in key) else key
        return Dual(self.value[key], self.tangent[tkey], self.level)

    def sum(self, axis=None):
        return sum_(self, axis)


def level_of(x) -> int:
    return x.level if isinstance(x, Dual) else 0


def shape_of(x) -> tuple:
    if isinstance(x, Dual):
        return x.shape
    return np.shape(x)


def primal(x) -> np.ndarray:
    """Strip all dual layers and return the plain value."""
    while isinstance(x, Dual):
        x = x.value
    return np.asarray(x)


def _ex(z):
    """Append a trailing axis so ``z`` broadcasts against a tangent."""
    if isinstance(z, Dual):
        return z[..., None]
    return np.asarray(z)[..., None]


def _match(t, vshape: tuple):
    tshape = shape_of(t)
    if tshape[:-1] != vshape:
        t = broadcast_to(t, vshape + (tshape[-1],))
    return t


def _lift(x, level: int, width: int):
    if level_of(x) == level:
        return x
    return Dual(x, np.zeros(shape_of(x) + (width,)), level)


def _top(xs) -> tuple[int, int]:
    level = max(level_of(x) for x in xs)
    width = next((x.width for x in xs if level_of(x) == level and level > 0), 0)
    return level, width


def add(x, y):
    lx, ly = level_of(x), level_of(y)
    if lx == ly == 0:
        return np.add(x, y)
    if lx == ly:
        v = x.value + y.value
        t = x.tangent + y.tangent
        return Dual(v, _match(t, shape_of(v)), lx)
    if lx > ly:
        v = x.value + y
        return Dual(v, _match(x.tangent, shape_of(v)), lx)
    v = x + y.value
    return Dual(v, _match(y.tangent, shape_of(v)), ly)


def neg(x):
    return -x


def sub(x, y):
    return add(x, -y if isinstance(y, Dual) else np.negative(y))


def mul(x, y):
    lx, ly = level_of(x), level_of(y)
    if lx == ly == 0:
        return np.multiply(x, y)
    if lx == ly:
        v = x.value * y.value
        t = _ex(x.value) * y.tangent + _ex(y.value) * x.tangent
        return Dual(v, _match(t, shape_of(v)), lx)
    if lx > ly:
        v = x.value * y
        return Dual(v, _match(x.tangent * _ex(y), shape_of(v)), lx)
    v = x * y.value
    return Dual(v, _match(_ex(x) * y.tangent, shape_of(v)), ly)


def reciprocal(x):
    if not isinstance(x, Dual):
        return np.divide(1.0, x)
    r = reciprocal(x.value)
    return Dual(r, -_ex(r * r) * x.tangent, x.level)


def div(x, y):
    if isinstance(y, Dual):
        return mul(x, reciprocal(y))
    if isinstance(x, Dual):
        return mul(x, np.divide(1.0, y))
    return np.divide(x, y)


def power(x, p):
    """Raise to a constant power."""
    if isinstance(p, Dual):
        raise TypeError("power exponent must be a constant")
    if not isinstance(x, Dual):
        return np.power(x, p)
    if p == 2:
        return x * x
    if p == 1:
        return x
    v = power(x.value, p)
    d = p * power(x.value, p - 1)
    return Dual(v, _ex(d) * x.tangent, x.level)


def exp(x):
    if not isinstance(x, Dual):
        return np.exp(x)
    v = exp(x.value)
    return Dual(v, _ex(v) * x.tangent, x.level)


def log(x):
    if not isinstance(x, Dual):
        return np.log(x)
    return Dual(log(x.value), _ex(reciprocal(x.value)) * x.tangent, x.level)


def sigmoid(x):
    if not isinstance(x, Dual):
        return expit(x)
    s = sigmoid(x.value)
    return Dual(s, _ex(s * (1.0 - s)) * x.tangent, x.level)


def sqrt(x):
    if not isinstance(x, Dual):
        return np.sqrt(x)
    s = sqrt(x.value)
    return Dual(s, _ex(0.5 * reciprocal(s)) * x.tangent, x.level)


def _axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    axis = axis if isinstance(axis, tuple) else (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None):
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    axes = _axes(axis, x.ndim)
    return Dual(sum_(x.value, axes), sum_(x.tangent, axes), x.level)


def dot(x, y):
    """Inner product over the last axis."""
    return sum_(mul(x, y), -1)


def matvec(a, x):
    """``a @ x`` for a matrix ``a[..., n, m]`` and vector ``x[..., m]``."""
    x = x[..., None, :] if isinstance(x, Dual) else np.asarray(x)[..., None, :]
    return sum_(mul(a, x), -1)


def broadcast_to(x, shape: tuple):
    if not isinstance(x, Dual):
        return np.broadcast_to(x, shape)
    return Dual(broadcast_to(x.value, shape),
                broadcast_to(x.tangent, tuple(shape) + (x.width,)), x.level)


def stack(xs, axis: int = 0):
    xs = list(xs)
    level, width = _top(xs)
    if level == 0:
        return np.stack(xs, axis=axis)
    xs = [_lift(x, level, width) for x in xs]
    a = axis % (xs[0].ndim + 1)
    return Dual(stack([x.value for x in xs], a), stack([x.tangent for x in xs], a), level)


def concatenate(xs, axis: int = 0):
    xs = list(xs)
    level, width = _top(xs)
    if level == 0:
        return np.concatenate(xs, axis=axis)
    xs = [_lift(x, level, width) for x in xs]
    a = axis % xs[0].ndim
    return Dual(concatenate([x.value for x in xs], a),
                concatenate([x.tangent for x in xs], a), level)


def where(cond, x, y):
    level, width = _top([x, y])
    if level == 0:
        return np.where(cond, x, y)
    cond = np.asarray(cond)
    vshape = np.broadcast_shapes(cond.shape, shape_of(x), shape_of(y))
    x = _lift(x, level, width)
    y = _lift(y, level, width)
    v = where(cond, x.value, y.value)
    t = where(cond[..., None], x.tangent, y.tangent)
    return Dual(v, _match(t, vshape), level)


def take_along_axis(x, idx, axis: int):
    idx = np.asarray(idx)
    if not isinstance(x, Dual):
        return np.take_along_axis(x, idx, axis=axis)
    a = axis % x.ndim
    return Dual(take_along_axis(x.value, idx, a),
                take_along_axis(x.tangent, idx[..., None], a), x.level)


def _seed(x):
    level = max(level_of(x), _ACTIVE.get()) + 1
    if level > MAX_DEPTH:
        raise NestingDepthError(f"forward-mode nesting deeper than {MAX_DEPTH} is not supported")
    shape = shape_of(x)
    if len(shape) == 0:
        raise ValueError("differentiation input must have a trailing parameter axis")
    n = shape[-1]
    return Dual(x, np.broadcast_to(np.eye(n), shape + (n,)), level), level, n


def _run(f, xd, level: int, n: int):
    token = _ACTIVE.set(level)
    try:
        with np.errstate(over="raise", divide="raise", invalid="raise"):
            y = f(xd)
    except FloatingPointError as exc:
        raise NonFiniteError(f"non-finite intermediate during differentiation: {exc}") from None
    finally:
        _ACTIVE.reset(token)
    ly = level_of(y)
    if ly > level:
        raise NestingDepthError("an inner perturbation escaped its differentiation scope")
    if ly < level:
        # output does not depend on the input
        return y, np.zeros(shape_of(y) + (n,))
    if not np.all(np.isfinite(primal(y.tangent))):
        raise NonFiniteError("non-finite derivative")
    return y.value, y.tangent


def value_and_grad_forward(f, x):
    """Return ``(f(x), df/dx)``; ``x`` has shape ``(..., n)``.

    ``f`` maps ``(..., n)`` to a batch of scalars ``(...)``; the gradient has
    shape ``(..., n)``.  ``x`` may itself be a dual, which is how nesting works.
    """
    xd, level, n = _seed(x)
    return _run(f, xd, level, n)


def grad_forward(f, x):
    return value_and_grad_forward(f, x)[1]


def jacobian_forward(f, x):
    """Jacobian of a vector map: output shape ``f(x).shape + (n,)``."""
    return grad_forward(f, x)


def grad_nested(f, x):
    """Gradient of ``f`` at a plain array ``x`` where ``f`` may itself call ``grad_forward``."""
    if isinstance(x, Dual):
        raise NestingDepthError("grad_nested must be the outermost differentiation")
    return grad_forward(f, x)


def hessian_forward(f, x):
    return jacobian_forward(lambda z: grad_forward(f, z), x)
