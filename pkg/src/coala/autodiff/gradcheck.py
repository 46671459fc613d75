"""Central finite-difference comparison for analytic gradients."""
from __future__ import annotations

import numpy as np


def numeric_gradient(f, x, h: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (any shape)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(f(x))
        flat[i] = old - h
        down = float(f(x))
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """max |analytic - numeric| / max(1, |numeric|) over coordinates."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def gradcheck(f, grad, x, h: float = 1e-4) -> float:
    """Compare ``grad(x)`` against central differences of ``f``; returns the max relative error."""
    return relative_error(grad(np.array(x, dtype=np.float64)), numeric_gradient(f, x, h))
