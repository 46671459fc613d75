"""Return, advantage and policy-gradient estimators for batched meta-episodes.

Arrays are laid out ``(..., B, L)``: optional leading meta-batch axes, then the
inner batch of ``B`` parallel trajectories, then ``L = M * T`` time steps made
of ``M`` concatenated inner episodes of length ``T``.

Three estimator modes share one code path and differ only in two flags:

* ``coala``: current inner-episode terms scaled by ``1/B`` and future
  inner-episode terms averaged over the inner batch.
* ``mfos``: future terms averaged over the batch, current terms unscaled.
* ``batch_unaware``: every trajectory treated on its own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import tape as T

MODES = ("coala", "mfos", "batch_unaware")
# mode -> (average_future_episodes, normalize_current_episode)
MODE_FLAGS = {
    "coala": (True, True),
    "mfos": (True, False),
    "batch_unaware": (False, False),
}
OPPONENT_KINDS = ("naive", "meta")


def _check_mode(mode: str) -> None:
    if mode not in MODE_FLAGS:
        raise ValueError(f"unknown estimator mode {mode!r}; expected one of {MODES}")


@dataclass(frozen=True)
class ReturnsConfig:
    value_discount: float = 1.0
    lambda_td: float = 1.0
    lambda_gae: float = 1.0
    inner_episode_length: int = 10
    reward_rescaling: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.value_discount <= 1.0:
            raise ValueError("value_discount must lie in (0, 1]")
        for name in ("lambda_td", "lambda_gae"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.inner_episode_length < 1:
            raise ValueError("inner_episode_length must be at least 1")
        if not self.reward_rescaling > 0.0:
            raise ValueError("reward_rescaling must be positive")


@dataclass(frozen=True)
class MetaTrajectoryBatch:
    """One meta-episode (or a stack of them) seen from a single agent.

    ``rewards``, ``values``, ``actions`` and ``log_probs`` are ``(..., B, L)``.
    ``values`` holds the value estimate at each step; ``bootstrap`` the value
    after the last step (zero when the meta-episode ends there).
    """

    rewards: np.ndarray
    values: np.ndarray
    inner_episode_length: int
    actions: np.ndarray | None = None
    log_probs: np.ndarray | None = None
    observations: np.ndarray | None = None
    bootstrap: np.ndarray | None = None
    opponent_kind: str = "naive"

    def __post_init__(self):
        r = np.asarray(self.rewards)
        if r.ndim < 2:
            raise ValueError("rewards must be at least (B, L)")
        if np.shape(self.values) != r.shape:
            raise ValueError(f"values shape {np.shape(self.values)} does not match rewards {r.shape}")
        if self.inner_episode_length < 1 or r.shape[-1] % self.inner_episode_length:
            raise ValueError(f"sequence length {r.shape[-1]} is not a multiple of T={self.inner_episode_length}")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if self.opponent_kind not in OPPONENT_KINDS:
            raise ValueError(f"opponent_kind must be one of {OPPONENT_KINDS}")

    @property
    def batch_size(self) -> int:
        return np.shape(self.rewards)[-2]

    @property
    def num_inner_episodes(self) -> int:
        return np.shape(self.rewards)[-1] // self.inner_episode_length

    @property
    def episode_index(self) -> np.ndarray:
        """Zero-based inner-episode index of every step."""
        return np.arange(np.shape(self.rewards)[-1]) // self.inner_episode_length


@dataclass(frozen=True)
class AdvantageSet:
    advantages: np.ndarray
    value_targets: np.ndarray


def batch_lambda_returns(r, discount: float, v, lam: float, average_future_episodes: bool,
                         normalize_current_episode: bool, inner_episode_length: int) -> np.ndarray:
    """Backward lambda-return scan with optional cross-batch averaging.

    ``v[..., t]`` is the bootstrap value of the state that follows step ``t``.
    At the last step of every inner episode the per-trajectory accumulator may
    be replaced by the batch mean accumulator, and current-step rewards may be
    divided by the batch size ``B`` (axis -2).
    """
    r = np.asarray(r, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"rewards {r.shape} and values {v.shape} differ in shape")
    if r.ndim < 2:
        raise ValueError("inputs must be at least (B, L)")
    seq_len, batch_size = r.shape[-1], r.shape[-2]
    if inner_episode_length < 1 or seq_len % inner_episode_length:
        raise ValueError(f"sequence length {seq_len} is not a multiple of {inner_episode_length}")
    normalization = batch_size if normalize_current_episode else 1
    episode_end = np.arange(seq_len) % inner_episode_length == inner_episode_length - 1
    acc = v[..., -1].copy()
    global_acc = v[..., -1].mean(axis=-1, keepdims=True)
    returns = np.empty_like(r)
    for t in range(seq_len - 1, -1, -1):
        if average_future_episodes and episode_end[t]:
            acc = np.broadcast_to(global_acc, acc.shape).copy()
        acc = r[..., t] / normalization + discount * ((1.0 - lam) * v[..., t] + lam * acc)
        global_acc = np.mean(r[..., t] + discount * ((1.0 - lam) * v[..., t] + lam * global_acc),
                             axis=-1, keepdims=True)
        returns[..., t] = acc
    return returns


def scale_rewards(rewards, cfg: ReturnsConfig) -> np.ndarray:
    return np.asarray(rewards, dtype=np.float64) * cfg.reward_rescaling


def unscale(x, cfg: ReturnsConfig) -> np.ndarray:
    """Back to the environment's reward units, for reporting."""
    return np.asarray(x, dtype=np.float64) / cfg.reward_rescaling


def successor_values(values, bootstrap=None) -> np.ndarray:
    """Shift values left by one step; the last slot takes ``bootstrap`` (default 0)."""
    values = np.asarray(values, dtype=np.float64)
    nxt = np.empty_like(values)
    nxt[..., :-1] = values[..., 1:]
    nxt[..., -1] = 0.0 if bootstrap is None else bootstrap
    return nxt


def compute_value_targets(batch: MetaTrajectoryBatch, cfg: ReturnsConfig) -> np.ndarray:
    """TD(lambda) targets of the per-trajectory value, whatever the opponent kind.

    Rewards are rescaled; values are assumed to be in rescaled units already.
    """
    r = scale_rewards(batch.rewards, cfg)
    v_next = successor_values(batch.values, batch.bootstrap)
    return batch_lambda_returns(r, cfg.value_discount, v_next, cfg.lambda_td, False, False,
                                batch.inner_episode_length)


def td_errors(batch: MetaTrajectoryBatch, cfg: ReturnsConfig) -> np.ndarray:
    r = scale_rewards(batch.rewards, cfg)
    v = np.asarray(batch.values, dtype=np.float64)
    return r + cfg.value_discount * successor_values(v, batch.bootstrap) - v


def compute_advantages(batch: MetaTrajectoryBatch, cfg: ReturnsConfig, mode: str) -> AdvantageSet:
    """Generalized advantages for ``mode``, plus the shared value targets.

    TD errors go through ``batch_lambda_returns`` with discount
    ``gamma * lambda_gae``, lambda 1 and the mode's flags.  The accumulator is
    seeded with zero: no advantage is carried past the meta-episode end.
    """
    _check_mode(mode)
    average_future, normalize_current = MODE_FLAGS[mode]
    delta = td_errors(batch, cfg)
    adv = batch_lambda_returns(delta, cfg.value_discount * cfg.lambda_gae, np.zeros_like(delta), 1.0,
                               average_future, normalize_current, batch.inner_episode_length)
    return AdvantageSet(adv, compute_value_targets(batch, cfg))


def estimator_mode(opponent_kind: str, configured: str) -> str:
    """Records against another meta agent always use independent trajectories."""
    _check_mode(configured)
    if opponent_kind not in OPPONENT_KINDS:
        raise ValueError(f"opponent_kind must be one of {OPPONENT_KINDS}")
    return configured if opponent_kind == "naive" else "batch_unaware"


def advantage_normalize(advantages, groups=None, scale: bool = False, eps: float = 1e-8) -> np.ndarray:
    """Center advantages to zero mean separately within each group.

    ``groups`` labels the leading axis (one label per meta-trajectory); with
    ``None`` everything is one group.  ``scale`` additionally divides by the
    group's standard deviation.
    """
    adv = np.asarray(advantages, dtype=np.float64)
    if groups is None:
        groups = np.zeros(adv.shape[:1] if adv.ndim else (), dtype=np.int64)
    groups = np.asarray(groups)
    if adv.ndim and groups.shape != adv.shape[:groups.ndim]:
        raise ValueError(f"group labels {groups.shape} do not match advantages {adv.shape}")
    out = adv.copy()
    for g in np.unique(groups):
        sel = groups == g
        block = adv[sel]
        if block.size == 0:
            continue
        centered = block - block.mean()
        if scale:
            centered = centered / (block.std() + eps)
        out[sel] = centered
    return out


def _current_and_future(rewards, inner_episode_length: int):
    """Per-step return split into the rest of the current inner episode and all later ones.

    Returns ``(current, future)`` shaped like ``rewards``; ``future`` is the
    return of the same trajectory after the current inner episode ends.
    """
    r = np.asarray(rewards, dtype=np.float64)
    L = r.shape[-1]
    if L % inner_episode_length:
        raise ValueError(f"sequence length {L} is not a multiple of {inner_episode_length}")
    to_go = np.cumsum(r[..., ::-1], axis=-1)[..., ::-1]
    ep_end = (np.arange(L) // inner_episode_length + 1) * inner_episode_length
    after = np.concatenate([to_go, np.zeros(r.shape[:-1] + (1,))], axis=-1)[..., ep_end]
    return to_go - after, after


def return_weights(rewards, inner_episode_length: int, mode: str):
    """Per-step score-function weights split as ``(current, future)`` terms.

    The policy gradient is ``sum_b sum_l grad log pi(a_l^b) * (current + future)``:

    * coala: ``current/B + mean_b' future^b'``
    * mfos: ``current + mean_b' future^b'``
    * batch_unaware: ``(current + future) / B``
    """
    _check_mode(mode)
    cur, fut = _current_and_future(rewards, inner_episode_length)
    B = cur.shape[-2]
    if mode == "batch_unaware":
        return cur / B, fut / B
    pooled = np.broadcast_to(fut.mean(axis=-2, keepdims=True), fut.shape)
    return (cur / B if mode == "coala" else cur), pooled


def reinforce_gradient(rewards, logp_grads, inner_episode_length: int, mode: str) -> np.ndarray:
    """Raw-return score-function gradient, ``sum_b sum_l g_l^b * weight_l^b``.

    ``logp_grads`` is ``(..., B, L, P)``: gradients of each action's log-prob.
    Leading axes are kept.
    """
    cur, fut = return_weights(rewards, inner_episode_length, mode)
    g = np.asarray(logp_grads, dtype=np.float64)
    return np.einsum("...blp,...bl->...p", g, cur + fut)


def gradient_contributions(rewards, logp_grads, inner_episode_length: int, mode: str,
                           baseline: bool = False):
    """Current- and future-episode parts of the mode's gradient, averaged over leading axes.

    With ``baseline`` each weight is centered per step over all leading and
    batch entries, a constant baseline that removes most of the noise.
    """
    cur, fut = return_weights(rewards, inner_episode_length, mode)
    if baseline:
        axes = tuple(range(cur.ndim - 1))
        cur = cur - cur.mean(axis=axes, keepdims=True)
        fut = fut - fut.mean(axis=axes, keepdims=True)
    g = np.asarray(logp_grads, dtype=np.float64)
    lead = g.ndim - 3
    c = np.einsum("...blp,...bl->...p", g, cur)
    f = np.einsum("...blp,...bl->...p", g, fut)
    if lead:
        c = c.reshape((-1, c.shape[-1])).mean(axis=0)
        f = f.reshape((-1, f.shape[-1])).mean(axis=0)
    return c, f


def gradient_balance(rewards, logp_grads, inner_episode_length: int, mode: str, baseline: bool = False) -> float:
    """Norm of the future-episode gradient part over the current-episode part.

    A zero current part yields ``inf``.
    """
    c, f = gradient_contributions(rewards, logp_grads, inner_episode_length, mode, baseline)
    den = float(np.linalg.norm(c))
    num = float(np.linalg.norm(f))
    if den == 0.0:
        return float("inf")
    return num / den


@dataclass(frozen=True)
class LossConfig:
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    clip_value: bool = True


def _value_loss(values, old_values, targets, cfg: LossConfig):
    err = T.square(values - targets)
    if cfg.clip_value and old_values is not None:
        clipped = old_values + T.clip(values - old_values, -cfg.clip_eps, cfg.clip_eps)
        err = T.maximum(err, T.square(clipped - targets))
    return T.mean(err)


def _entropy(logits):
    logp = T.log_softmax(logits, axis=-1)
    return -T.mean(T.sum_(T.exp(logp) * logp, axis=-1))


def ppo_loss(logits, actions, old_log_probs, advantages, values, old_values, value_targets,
             cfg: LossConfig = LossConfig()):
    """Clipped-ratio surrogate plus value and entropy terms.

    ``logits`` and ``values`` may be tape tensors; everything else is data.
    Returns ``(loss, stats)``; all terms are means over every element.
    """
    logp_all = T.log_softmax(logits, axis=-1)
    logp = T.take_along_axis(logp_all, np.asarray(actions)[..., None], axis=-1)[..., 0]
    ratio = T.exp(logp - np.asarray(old_log_probs))
    adv = np.asarray(advantages, dtype=np.float64)
    surrogate = T.minimum(ratio * adv, T.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv)
    policy = -T.mean(surrogate)
    value = _value_loss(values, old_values, value_targets, cfg)
    entropy = _entropy(logits)
    loss = policy + cfg.value_coef * value - cfg.entropy_coef * entropy
    ratio_v = T._val(ratio)
    stats = {
        "policy_loss": float(T._val(policy)),
        "value_loss": float(T._val(value)),
        "entropy": float(T._val(entropy)),
        "clip_fraction": float(np.mean(np.abs(ratio_v - 1.0) > cfg.clip_eps)),
    }
    return loss, stats


def a2c_loss(logits, actions, advantages, values, value_targets, cfg: LossConfig = LossConfig(),
             old_values=None):
    """Plain policy-gradient surrogate ``-mean(log pi(a) * A)`` plus value and entropy terms."""
    logp_all = T.log_softmax(logits, axis=-1)
    logp = T.take_along_axis(logp_all, np.asarray(actions)[..., None], axis=-1)[..., 0]
    policy = -T.mean(logp * np.asarray(advantages, dtype=np.float64))
    value = _value_loss(values, old_values, value_targets, cfg)
    entropy = _entropy(logits)
    loss = policy + cfg.value_coef * value - cfg.entropy_coef * entropy
    stats = {
        "policy_loss": float(T._val(policy)),
        "value_loss": float(T._val(value)),
        "entropy": float(T._val(entropy)),
    }
    return loss, stats
