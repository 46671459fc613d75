"""Dense linear solve that works on plain arrays and on (nested) duals."""
from __future__ import annotations

import numpy as np

from .dual import broadcast_to, concatenate, primal, shape_of, stack, take_along_axis


class SingularMatrixError(ArithmeticError):
    """Raised when elimination meets a zero pivot."""


def solve_linear(a, b):
    """Solve ``a @ x = b`` by Gauss-Jordan elimination with partial pivoting.

    ``a`` has shape ``(..., n, n)`` and ``b`` shape ``(..., n)``; both may be
    duals.  Pivot rows are chosen from the primal values so the same
    permutation applies to every derivative layer.
    """
    n = shape_of(a)[-1]
    if shape_of(a)[-2] != n or shape_of(b)[-1] != n:
        raise ValueError(f"incompatible shapes {shape_of(a)} and {shape_of(b)}")
    batch = np.broadcast_shapes(shape_of(a)[:-2], shape_of(b)[:-1])
    ab = concatenate([broadcast_to(a, batch + (n, n)), broadcast_to(b[..., None], batch + (n, 1))], axis=-1)
    rows = np.arange(n)
    pivots = []
    for k in range(n):
        # ab holds columns k..n of the partially reduced system
        col = np.abs(primal(ab)[..., :, 0])
        col[..., :k] = -1.0
        piv = np.argmax(col, axis=-1)
        if np.any(np.take_along_axis(col, piv[..., None], -1) == 0.0):
            raise SingularMatrixError(f"zero pivot in column {k}")
        if np.any(piv != k):
            perm = np.broadcast_to(rows, batch + (n,)).copy()
            perm[..., k] = piv
            np.put_along_axis(perm, piv[..., None], k, axis=-1)
            width = shape_of(ab)[-1]
            ab = take_along_axis(ab, np.broadcast_to(perm[..., None], batch + (n, width)), -2)
        pivot = ab[..., k, 0]
        factor = ab[..., :, 0] / pivot[..., None] * (rows != k)
        ab = ab[..., :, 1:] - factor[..., :, None] * ab[..., k:k + 1, 1:]
        pivots.append(pivot)
    return ab[..., :, 0] / stack(pivots, axis=-1)
