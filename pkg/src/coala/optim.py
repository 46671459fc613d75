"""Small first-order optimizers over dicts of numpy arrays (or bare arrays).

All optimizers minimize.  To ascend an objective, pass the negated gradient.
Every array may carry leading population axes; the updates are elementwise
except for global-norm clipping, which reduces over ``norm_axes``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def tree_map(fn, *trees):
    if isinstance(trees[0], dict):
        return {k: fn(*(t[k] for t in trees)) for k in trees[0]}
    return fn(*trees)


def global_norm(grads, lead: int = 0) -> np.ndarray:
    """L2 norm over all parameters, keeping the first ``lead`` axes separate."""
    leaves = list(grads.values()) if isinstance(grads, dict) else [grads]
    total = 0.0
    for g in leaves:
        axes = tuple(range(lead, g.ndim))
        total = total + np.sum(g * g, axis=axes)
    return np.sqrt(total)


def clip_by_global_norm(grads, max_norm: float, lead: int = 0):
    norm = global_norm(grads, lead)
    scale = np.minimum(1.0, max_norm / np.maximum(norm, 1e-12))

    def apply(g):
        return g * np.reshape(scale, np.shape(scale) + (1,) * (g.ndim - lead))
    return tree_map(apply, grads), norm


@dataclass
class AdamState:
    step: int
    mu: object
    nu: object


@dataclass(frozen=True)
class Adam:
    """Adam with optional decoupled weight decay (AdamW when ``weight_decay`` > 0)."""

    lr: float = 1e-3
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def init(self, params) -> AdamState:
        zeros = tree_map(np.zeros_like, params)
        return AdamState(0, zeros, tree_map(np.zeros_like, params))

    def update(self, params, grads, state: AdamState):
        step = state.step + 1
        mu = tree_map(lambda m, g: self.b1 * m + (1 - self.b1) * g, state.mu, grads)
        nu = tree_map(lambda v, g: self.b2 * v + (1 - self.b2) * g * g, state.nu, grads)
        c1 = 1 - self.b1 ** step
        c2 = 1 - self.b2 ** step

        def apply(p, m, v):
            u = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                u = u + self.weight_decay * p
            return p - self.lr * u
        return tree_map(apply, params, mu, nu), AdamState(step, mu, nu)


def adamw(lr: float, weight_decay: float = 1e-4) -> Adam:
    """AdamW with the common library defaults."""
    return Adam(lr=lr, weight_decay=weight_decay)


@dataclass(frozen=True)
class SGD:
    lr: float = 1e-2

    def init(self, params):
        return None

    def update(self, params, grads, state):
        return tree_map(lambda p, g: p - self.lr * g, params, grads), None


def make_optimizer(name: str, lr: float, eps: float = 1e-8, weight_decay: float = 1e-4):
    name = name.lower()
    if name == "adam":
        return Adam(lr=lr, eps=eps)
    if name == "adamw":
        return Adam(lr=lr, eps=eps, weight_decay=weight_decay)
    if name == "sgd":
        return SGD(lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
