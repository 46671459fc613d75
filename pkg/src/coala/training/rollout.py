"""Batched meta-episode rollouts with in-loop naive learner updates.

A chunk of ``U`` meta-episodes runs in lockstep.  Each meta-episode is ``B``
parallel environments played for ``M`` inner episodes of ``T`` steps.  The
meta agent keeps its recurrent state across inner episodes; a naive opponent
resets its state every inner episode and, after each of the first ``M - 1``
inner episodes, takes one A2C step on that inner batch.  Meta opponents keep
their parameters fixed for the whole meta-episode.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff.tape import Tape
from ..estimators import LossConfig, a2c_loss, batch_lambda_returns
from ..optim import Adam, SGD, clip_by_global_norm
from ..policy import initial_state, policy_forward, policy_step, sample_action
from .config import NaiveConfig

# per-step environment statistics kept in a record, by environment kind
_INFO_KEYS = {"ipd": (), "cleanup": ("cleaned", "zap_attempt", "zap_hit", "harvested", "dirt", "apples")}


class NumericAbort(FloatingPointError):
    """Raised when activations or parameters stop being finite."""


@dataclass
class MetaEpisodeRecord:
    """Everything the meta agent saw in ``U`` meta-episodes; arrays lead with (U, B, L)."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    opp_actions: np.ndarray
    opp_rewards: np.ndarray
    opponent_kind: np.ndarray
    opponent_index: np.ndarray
    inner_length: int
    naive_updates: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def units(self) -> int:
        return self.rewards.shape[0]

    @property
    def reset(self) -> np.ndarray:
        """Meta context resets only at the very first step."""
        r = np.zeros(self.rewards.shape, dtype=bool)
        r[..., 0] = True
        return r

    def select(self, idx) -> "MetaEpisodeRecord":
        idx = np.asarray(idx)
        return MetaEpisodeRecord(
            self.obs[idx], self.actions[idx], self.log_probs[idx], self.values[idx], self.rewards[idx],
            self.opp_actions[idx], self.opp_rewards[idx], self.opponent_kind[idx], self.opponent_index[idx],
            self.inner_length, self.naive_updates[idx], {k: v[idx] for k, v in self.info.items()})

    @staticmethod
    def concatenate(records) -> "MetaEpisodeRecord":
        records = list(records)
        first = records[0]

        def cat(name):
            return np.concatenate([getattr(r, name) for r in records])
        info = {k: np.concatenate([r.info[k] for r in records]) for k in first.info}
        return MetaEpisodeRecord(
            cat("obs"), cat("actions"), cat("log_probs"), cat("values"), cat("rewards"), cat("opp_actions"),
            cat("opp_rewards"), cat("opponent_kind"), cat("opponent_index"), first.inner_length,
            cat("naive_updates"), info)


def make_naive_optimizer(cfg: NaiveConfig):
    if cfg.optimizer == "sgd":
        return SGD(lr=cfg.lr)
    return Adam(lr=cfg.lr, eps=cfg.adam_eps)


def naive_a2c_update(params: dict, opt, opt_state, obs, actions, rewards, cfg: NaiveConfig):
    """One A2C step per unit on a batch of complete inner episodes.

    Arrays are ``(U, B, T, ...)`` and ``params`` carry the unit axis ``U``.
    Returns are discounted reward-to-go inside the episode without bootstrap;
    advantages are ``return - value``, centered per unit when configured.
    """
    U, B, T = np.shape(rewards)
    tape = Tape()
    names = list(params)
    leaves = {k: tape.leaf(params[k]) for k in names}
    reset = np.zeros((U, B, T), dtype=bool)
    reset[..., 0] = True
    logits, values, _ = policy_forward(leaves, obs, reset)
    r = np.asarray(rewards, dtype=np.float64) * cfg.reward_rescaling
    returns = batch_lambda_returns(r, cfg.gamma, np.zeros_like(r), 1.0, False, False, T)
    adv = returns - values.value
    if cfg.advantage_normalization:
        adv = adv - adv.mean(axis=(1, 2), keepdims=True)
    loss, stats = a2c_loss(logits, actions, adv, values, returns,
                           LossConfig(value_coef=cfg.value_coef, entropy_coef=cfg.entropy_coef, clip_value=False))
    # each unit owns its parameters: summing per-unit means gives per-unit gradients
    grads = tape.gradients(loss * float(U), [leaves[k] for k in names])
    grads, norm = clip_by_global_norm(dict(zip(names, grads)), cfg.max_grad_norm, lead=1)
    new_params, new_state = opt.update(params, grads, opt_state)
    stats["grad_norm"] = float(np.mean(norm))
    return new_params, new_state, stats


def _check_finite(x, what: str):
    if not np.all(np.isfinite(x)):
        raise NumericAbort(f"non-finite {what} during rollout")


def _where_units(mask, new: dict, old: dict) -> dict:
    out = {}
    for k in new:
        m = np.reshape(mask, (-1,) + (1,) * (np.ndim(new[k]) - 1))
        out[k] = np.where(m, new[k], old[k])
    return out


def run_meta_episode(meta_params: dict, opp_params: dict, opp_is_naive, env, batch_size: int,
                     inner_episodes: int, inner_length: int, rng: np.random.Generator,
                     naive_cfg: NaiveConfig, opponent_index=None) -> MetaEpisodeRecord:
    """Roll out ``U`` meta-episodes; ``opp_params`` carry a leading unit axis ``U``."""
    opp_is_naive = np.asarray(opp_is_naive, dtype=bool)
    U = opp_is_naive.shape[0]
    B, M, T = batch_size, inner_episodes, inner_length
    L = M * T
    width = np.shape(meta_params["W_in"])[-1]
    kind = "cleanup" if hasattr(env, "cfg") else "ipd"
    info_keys = _INFO_KEYS[kind]

    obs_rec = np.empty((U, B, L, env.obs_dim))
    opp_obs = np.empty((U, B, T, env.obs_dim))
    acts = np.empty((U, B, L), dtype=np.int64)
    opp_acts = np.empty((U, B, L), dtype=np.int64)
    logp = np.empty((U, B, L))
    vals = np.empty((U, B, L))
    rew = np.empty((U, B, L))
    opp_rew = np.empty((U, B, L))
    info = {}

    h_meta = initial_state((U, B), width)
    h_opp = initial_state((U, B), np.shape(opp_params["W_in"])[-1])
    opt = make_naive_optimizer(naive_cfg)
    opt_state = opt.init(opp_params)
    updates = np.zeros(U, dtype=np.int64)
    state = None
    for l in range(L):
        t = l % T
        if t == 0:
            state, obs = env.reset(rng, (U, B))
        reset_meta = np.full((U, B), l == 0)
        reset_opp = np.broadcast_to(np.where(opp_is_naive, t == 0, l == 0)[:, None], (U, B))
        logits, value, h_meta = policy_step(meta_params, obs[..., 0, :], h_meta, reset_meta)
        o_logits, _, h_opp = policy_step(opp_params, obs[..., 1, :], h_opp, reset_opp)
        _check_finite(logits, "meta logits")
        _check_finite(o_logits, "opponent logits")
        a, lp = sample_action(logits, rng)
        b, _ = sample_action(o_logits, rng)
        obs_rec[:, :, l] = obs[..., 0, :]
        opp_obs[:, :, t] = obs[..., 1, :]
        acts[:, :, l], opp_acts[:, :, l], logp[:, :, l], vals[:, :, l] = a, b, lp, value
        state, res = env.step(state, np.stack([a, b], axis=-1), rng)
        obs = res.obs
        rew[:, :, l] = res.rewards[..., 0]
        opp_rew[:, :, l] = res.rewards[..., 1]
        for key in info_keys:
            v = np.asarray(res.info[key])
            if key not in info:
                info[key] = np.empty((U, B, L) + v.shape[2:], dtype=v.dtype)
            info[key][:, :, l] = v
        if t == T - 1 and l < L - T and np.any(opp_is_naive):
            sl = slice(l - T + 1, l + 1)
            new_params, new_state, _ = naive_a2c_update(opp_params, opt, opt_state, opp_obs,
                                                        opp_acts[:, :, sl], opp_rew[:, :, sl], naive_cfg)
            for v in new_params.values():
                _check_finite(v, "naive parameters")
            opp_params = _where_units(opp_is_naive, new_params, opp_params)
            if new_state is not None:
                opt_state = type(new_state)(new_state.step, _where_units(opp_is_naive, new_state.mu, opt_state.mu),
                                            _where_units(opp_is_naive, new_state.nu, opt_state.nu))
            updates += opp_is_naive
    kinds = np.where(opp_is_naive, "naive", "meta")
    index = np.zeros(U, dtype=np.int64) if opponent_index is None else np.asarray(opponent_index)
    return MetaEpisodeRecord(obs_rec, acts, logp, vals, rew, opp_acts, opp_rew, kinds, index, T, updates, info)
