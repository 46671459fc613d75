"""Gradient-balance diagnostics: future- versus current-episode gradient parts.

The tabular sweep plays a 5-logit meta policy, conditioned on the current
inner episode only, against tabular naive learners that take one centered
REINFORCE step after each inner episode.  Score-function gradients of a
tabular policy are closed-form, so many meta-episodes are cheap and the ratio
can be measured with little noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..autodiff import tape as T
from ..autodiff.tape import Tape
from ..envs.ipd import REWARDS, joint_label
from ..estimators import MODES, gradient_balance, return_weights
from ..policy import policy_forward
from .config import TrainConfig
from .rollout import MetaEpisodeRecord


@dataclass(frozen=True)
class BalanceConfig:
    units: int = 2048
    inner_episodes: int = 4
    inner_length: int = 5
    naive_lr: float = 1.0
    naive_centering: bool = False
    seed: int = 0


def _mirror(state):
    """Agent 2's view of agent 1's state label (swap CD and DC)."""
    return np.where(state == 2, 3, np.where(state == 3, 2, state))


def tabular_rollout(meta_logits, batch: int, cfg: BalanceConfig, rng: np.random.Generator):
    """Returns meta ``(rewards (U, B, L), logp_grads (U, B, L, 5))``."""
    U, M, T = cfg.units, cfg.inner_episodes, cfg.inner_length
    L = M * T
    p_meta = expit(np.asarray(meta_logits, dtype=np.float64))
    psi = rng.normal(size=(U, 5))
    rewards = np.empty((U, batch, L))
    grads = np.zeros((U, batch, L, 5))
    for m in range(M):
        state = np.zeros((U, batch), dtype=np.int64)
        naive_scores = np.zeros((U, batch, T, 5))
        naive_rewards = np.empty((U, batch, T))
        q = expit(psi)
        for t in range(T):
            l = m * T + t
            pm = p_meta[state]
            other = _mirror(state)
            pn = np.take_along_axis(q, other, axis=1)
            a1 = (rng.random((U, batch)) >= pm).astype(np.int64)
            a2 = (rng.random((U, batch)) >= pn).astype(np.int64)
            # d log pi / d logit of the visited state: (1 - p) for cooperate, -p for defect
            np.put_along_axis(grads[:, :, l], state[..., None], (np.where(a1 == 0, 1.0 - pm, -pm))[..., None], axis=-1)
            np.put_along_axis(naive_scores[:, :, t], other[..., None], (np.where(a2 == 0, 1.0 - pn, -pn))[..., None],
                              axis=-1)
            rewards[:, :, l] = REWARDS[a1, a2, 0]
            naive_rewards[:, :, t] = REWARDS[a1, a2, 1]
            state = joint_label(a1, a2)
        if m < M - 1:
            to_go = np.cumsum(naive_rewards[..., ::-1], axis=-1)[..., ::-1]
            # without centering a single trajectory still moves the naive learner (B = 1)
            adv = to_go - to_go.mean(axis=1, keepdims=True) if cfg.naive_centering else to_go
            step = np.einsum("ubtp,ubt->up", naive_scores, adv) / batch
            psi = psi + cfg.naive_lr * step
    return rewards, grads


def balance_sweep(batch_sizes=(1, 2, 4, 8, 16), modes=MODES, cfg: BalanceConfig = BalanceConfig(),
                  meta_logits=None) -> dict:
    """``{mode: [ratio for each B]}`` with a per-step constant baseline."""
    logits = np.zeros(5) if meta_logits is None else np.asarray(meta_logits, dtype=np.float64)
    out = {mode: [] for mode in modes}
    for B in batch_sizes:
        rng = np.random.default_rng([cfg.seed, B])
        rewards, grads = tabular_rollout(logits, B, cfg, rng)
        for mode in modes:
            out[mode].append(gradient_balance(rewards, grads, cfg.inner_length, mode, baseline=True))
    return out


def network_gradient_balance(params: dict, record: MetaEpisodeRecord, cfg: TrainConfig, mode: str | None = None):
    """Balance ratio of the policy network's score-function gradient on recorded meta-episodes."""
    mode = mode or cfg.estimator
    cur, fut = return_weights(record.rewards * cfg.reward_rescaling, record.inner_length, mode)
    axes = tuple(range(cur.ndim - 1))
    norms = []
    for w in (cur, fut):
        w = w - w.mean(axis=axes, keepdims=True)
        tape = Tape()
        names = list(params)
        leaves = {k: tape.leaf(params[k]) for k in names}
        logits, _, _ = policy_forward(leaves, record.obs, record.reset)
        logp = T.take_along_axis(T.log_softmax(logits, axis=-1), record.actions[..., None], axis=-1)[..., 0]
        grads = tape.gradients(T.sum_(logp * w) * (1.0 / record.units), [leaves[k] for k in names])
        norms.append(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    return float("inf") if norms[0] == 0.0 else norms[1] / norms[0]
