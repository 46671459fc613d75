"""Zero-determinant extortion strategies and least-squares fitting to them."""
from __future__ import annotations

import numpy as np

# (T, R, P, S) of the default prisoner's dilemma
TEMPTATION, REWARD, PUNISHMENT, SUCKER = 2.0, 1.0, 0.0, -1.0
CHI_RANGE = (1.0, 10.0)


def phi_upper(chi):
    """Largest feasible ``phi`` for a given extortion factor."""
    spread = PUNISHMENT - SUCKER
    return spread / (spread + chi * (TEMPTATION - PUNISHMENT))


def _zd(chi, phi):
    spread = PUNISHMENT - SUCKER
    p1 = 1.0 - phi * (chi - 1.0) * (REWARD - PUNISHMENT) / spread
    p2 = 1.0 - phi * (1.0 + chi * (TEMPTATION - PUNISHMENT) / spread)
    p3 = phi * (chi + (TEMPTATION - PUNISHMENT) / spread)
    return np.stack([p1, p2, p3, np.zeros_like(p1)], axis=-1)


def zd_policy(chi: float, phi: float) -> np.ndarray:
    """Cooperate probabilities in states (CC, CD, DC, DD) of the (chi, phi) extortion strategy."""
    chi = float(chi)
    phi = float(phi)
    if chi < 1.0:
        raise ValueError(f"chi must be >= 1, got {chi}")
    if not 0.0 < phi <= phi_upper(chi) * (1 + 1e-12):
        raise ValueError(f"phi must lie in (0, {phi_upper(chi)}] for chi={chi}, got {phi}")
    return _zd(np.float64(chi), np.float64(phi))


def _loss(probs, chi, phi):
    return np.sum((_zd(chi, phi) - probs) ** 2, axis=-1)


def _best_phi(probs, chi):
    """Exact minimizer over phi for fixed chi (the loss is quadratic in phi), clipped to feasibility."""
    base = _zd(chi, 0.0)
    slope = _zd(chi, 1.0) - base
    phi = np.sum(slope * (probs - base), axis=-1) / np.sum(slope * slope, axis=-1)
    return np.clip(phi, 1e-12, phi_upper(chi))


def fit_zd(policy_probs, grid: int = 64, tol: float = 1e-12):
    """Fit (chi, phi) to cooperate probabilities over (CC, CD, DC, DD).

    Coarse grid over chi in [1, 10] and phi over its feasible interval, then
    coordinate descent: phi is minimized exactly, chi by a shrinking pattern
    search.  Returns ``(chi, phi, loss)``.
    """
    probs = np.asarray(policy_probs, dtype=np.float64)
    if probs.shape != (4,):
        raise ValueError("expected four cooperate probabilities")
    chis = np.linspace(*CHI_RANGE, grid)
    frac = np.linspace(1.0 / grid, 1.0, grid)
    cc, ff = np.meshgrid(chis, frac, indexing="ij")
    phis = ff * phi_upper(cc)
    losses = _loss(probs, cc, phis)
    i, j = np.unravel_index(np.argmin(losses), losses.shape)
    chi, phi = float(cc[i, j]), float(phis[i, j])
    best = float(losses[i, j])
    step = (CHI_RANGE[1] - CHI_RANGE[0]) / grid
    while step > tol:
        phi = float(_best_phi(probs, chi))
        best = float(_loss(probs, chi, phi))
        moved = False
        for cand in (chi - step, chi + step):
            cand = min(max(cand, CHI_RANGE[0]), CHI_RANGE[1])
            cphi = float(_best_phi(probs, cand))
            closs = float(_loss(probs, cand, cphi))
            if closs < best:
                chi, phi, best, moved = cand, cphi, closs, True
                break
        if not moved:
            step *= 0.5
    return chi, phi, best
