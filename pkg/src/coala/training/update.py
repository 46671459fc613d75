"""Meta-agent parameter updates from recorded meta-episodes (PPO or A2C)."""
from __future__ import annotations

import numpy as np

from ..autodiff.tape import Tape
from ..estimators import (
    LossConfig,
    MetaTrajectoryBatch,
    ReturnsConfig,
    a2c_loss,
    advantage_normalize,
    compute_advantages,
    estimator_mode,
    ppo_loss,
)
from ..optim import clip_by_global_norm
from ..policy import policy_forward
from .config import TrainConfig
from .rollout import MetaEpisodeRecord, NumericAbort


def returns_config(cfg: TrainConfig) -> ReturnsConfig:
    return ReturnsConfig(cfg.gamma, cfg.lambda_td, cfg.lambda_gae, cfg.inner_length, cfg.reward_rescaling)


def meta_advantages(record: MetaEpisodeRecord, cfg: TrainConfig):
    """Advantages and value targets, each (U, B, L), with the estimator chosen per unit."""
    rcfg = returns_config(cfg)
    adv = np.empty(record.rewards.shape)
    targets = np.empty(record.rewards.shape)
    kinds = np.asarray(record.opponent_kind)
    for kind in np.unique(kinds):
        sel = kinds == kind
        batch = MetaTrajectoryBatch(record.rewards[sel], record.values[sel], record.inner_length,
                                    opponent_kind=str(kind))
        out = compute_advantages(batch, rcfg, estimator_mode(str(kind), cfg.estimator))
        adv[sel] = out.advantages
        targets[sel] = out.value_targets
    if cfg.advantage_normalization:
        # center separately for meta-episodes against naive and against meta opponents
        adv = advantage_normalize(adv, groups=kinds)
    return adv, targets


def _loss_config(cfg: TrainConfig) -> LossConfig:
    return LossConfig(cfg.clip_eps, cfg.value_coef, cfg.entropy_coef, cfg.clip_value)


def _gradient(params: dict, record: MetaEpisodeRecord, adv, targets, cfg: TrainConfig):
    tape = Tape()
    names = list(params)
    leaves = {k: tape.leaf(params[k]) for k in names}
    logits, values, _ = policy_forward(leaves, record.obs, record.reset)
    if cfg.algorithm == "ppo":
        loss, stats = ppo_loss(logits, record.actions, record.log_probs, adv, values, record.values,
                               targets, _loss_config(cfg))
    else:
        loss, stats = a2c_loss(logits, record.actions, adv, values, targets, _loss_config(cfg))
    grads = tape.gradients(loss, [leaves[k] for k in names])
    grads, norm = clip_by_global_norm(dict(zip(names, grads)), cfg.max_grad_norm)
    stats["grad_norm"] = float(norm)
    return grads, stats


def meta_update(params: dict, opt, opt_state, record: MetaEpisodeRecord, cfg: TrainConfig,
                rng: np.random.Generator):
    """Update one meta agent on its records; returns ``(params, opt_state, stats)``.

    PPO runs ``ppo_epochs`` passes, each split into ``ppo_minibatches`` groups
    of whole meta-episodes.  A2C takes a single step on everything.
    """
    adv, targets = meta_advantages(record, cfg)
    U = record.units
    history = []
    if cfg.algorithm == "a2c":
        grads, stats = _gradient(params, record, adv, targets, cfg)
        params, opt_state = opt.update(params, grads, opt_state)
        history.append(stats)
    else:
        for _ in range(cfg.ppo_epochs):
            for idx in np.array_split(rng.permutation(U), min(cfg.ppo_minibatches, U)):
                idx = np.sort(idx)
                grads, stats = _gradient(params, record.select(idx), adv[idx], targets[idx], cfg)
                params, opt_state = opt.update(params, grads, opt_state)
                history.append(stats)
    for v in params.values():
        if not np.all(np.isfinite(v)):
            raise NumericAbort("non-finite meta parameters after update")
    stats = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    return params, opt_state, stats
