"""Finite iterated prisoner's dilemma, batched over leading axes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import StepResult

COOPERATE, DEFECT = 0, 1
# state labels; joint states are written from agent 1's side
S0, CC, CD, DC, DD = 0, 1, 2, 3, 4
LABELS = ("s0", "CC", "CD", "DC", "DD")
# rewards[a1, a2] -> (r1, r2)
REWARDS = np.array([[[1.0, 1.0], [-1.0, 2.0]],
                    [[2.0, -1.0], [0.0, 0.0]]])


@dataclass(frozen=True)
class IpdState:
    label: np.ndarray  # int array, agent 1's view
    t: int


def _one_hot(labels: np.ndarray, n: int) -> np.ndarray:
    return np.eye(n)[labels]


def joint_label(own: np.ndarray, other: np.ndarray) -> np.ndarray:
    """State label seen by a player whose last action is ``own``."""
    return 1 + 2 * own + other


class IpdEnv:
    """Two-player IPD with ``horizon`` rounds; observations are one-hot over 5 states."""

    obs_dim = 5
    n_actions = 2

    def __init__(self, horizon: int = 10):
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.horizon = horizon

    def reset(self, rng=None, batch: tuple = ()):
        state = IpdState(np.zeros(batch, dtype=np.int64), 0)
        return state, self.observe(state)

    def observe(self, state: IpdState) -> np.ndarray:
        own = state.label
        # agent 2 sees the pair ordered (own action, other's action)
        mirrored = np.where(own == CD, DC, np.where(own == DC, CD, own))
        return np.stack([_one_hot(own, 5), _one_hot(mirrored, 5)], axis=-2)

    def step(self, state: IpdState, actions: np.ndarray, rng=None):
        actions = np.asarray(actions)
        if np.any((actions != COOPERATE) & (actions != DEFECT)):
            raise ValueError("IPD actions must be 0 (cooperate) or 1 (defect)")
        if state.t >= self.horizon:
            raise ValueError("episode already finished")
        a1, a2 = actions[..., 0], actions[..., 1]
        nxt = IpdState(joint_label(a1, a2), state.t + 1)
        rewards = REWARDS[a1, a2]
        info = {"defect": actions == DEFECT}
        return nxt, StepResult(self.observe(nxt), rewards, nxt.t >= self.horizon, info)


def ipd_step(state: IpdState, a1, a2, horizon: int = 10):
    """Functional form of ``IpdEnv.step`` for a single pair of actions."""
    return IpdEnv(horizon).step(state, np.stack([np.asarray(a1), np.asarray(a2)], axis=-1))
