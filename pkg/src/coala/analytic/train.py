"""Population training on the analytic IPD: mixed groups, LOLA pairs, probes."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..optim import adamw
from .game import (
    DEFAULT_PAYOFFS,
    ETA_NAIVE,
    IpdPayoffs,
    expected_return,
    mixed_lola_gradient,
    naive_step,
    partial_gradient,
    per_step,
    probs_to_logits,
    projected_ascent_step,
    shaping_value_and_gradient,
)

DEFECT_PROB = 0.01
# cooperate probabilities (initial, CC, CD, DC, DD) of a soft tit-for-tat
TFT_PROBS = (0.99, 0.99, 0.01, 0.99, 0.01)
# mixture factors used with each look-ahead count
LOLA_MIXTURE = {1: 1.0, 2: 1.0, 3: 0.75, 10: 0.6, 20: 0.4}


class NumericAbort(FloatingPointError):
    """Raised when training parameters stop being finite."""


@dataclass(frozen=True)
class MixedGroupConfig:
    p_naive: float = 0.75
    metabatch: int = 8
    eta_naive: float = ETA_NAIVE
    eta_meta: float = 0.005
    naive_steps: int = 20
    steps: int = 1000
    seeds: int = 32
    seed: int = 0
    gamma: float = 0.95
    weight_decay: float = 1e-4
    naive_init_std: float = 1.0
    naive_objective: str = "own"
    per_step_return: bool = True
    agents: int = 2
    switch_step: int = -1
    p_naive_after: float = 0.0
    reset_optimizer_on_switch: bool = True
    shaping_scale: float = 1.0
    log_every: int = 10

    def __post_init__(self):
        for name in ("p_naive", "p_naive_after"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.agents not in (1, 2):
            raise ValueError("agents must be 1 or 2")
        if self.metabatch < 1 or self.seeds < 1 or self.steps < 0 or self.naive_steps < 0:
            raise ValueError("metabatch, seeds, steps and naive_steps must be positive")
        if self.naive_objective not in ("own", "shaper"):
            raise ValueError("naive_objective must be 'own' or 'shaper'")

    def p_naive_at(self, step: int) -> float:
        if 0 <= self.switch_step <= step:
            return self.p_naive_after
        return self.p_naive

    @property
    def payoffs(self) -> IpdPayoffs:
        return IpdPayoffs(DEFAULT_PAYOFFS.r1, DEFAULT_PAYOFFS.r2, self.gamma)


@dataclass
class Trace:
    """Logged training curves; leading axis is the logged step."""

    steps: list = field(default_factory=list)
    params: list = field(default_factory=list)
    shaping_reward: list = field(default_factory=list)
    naive_reward: list = field(default_factory=list)
    otherplay_reward: list = field(default_factory=list)

    def as_arrays(self) -> dict:
        return {k: np.asarray(v) for k, v in asdict(self).items()}

    def final(self, key: str) -> np.ndarray:
        return np.asarray(getattr(self, key)[-1])

    def rows(self, base_seed: int = 0):
        """JSONL-style records, one per logged step, seed and agent."""
        for i, step in enumerate(self.steps):
            params = self.params[i]
            for s in range(params.shape[0]):
                for a in range(params.shape[1]):
                    yield {
                        "step": int(step),
                        "seed": base_seed + s,
                        "agent": a,
                        "shaping_reward": float(self.shaping_reward[i][s, a]),
                        "naive_reward": float(self.naive_reward[i][s, a]),
                        "otherplay_reward": float(self.otherplay_reward[i][s, a]),
                        "params": [float(x) for x in params[s, a]],
                    }


def seed_streams(base: int, seeds: int) -> list[np.random.Generator]:
    """One generator per seed, independent of how seeds are later grouped."""
    return [np.random.default_rng([base, s]) for s in range(seeds)]


def initial_policies(kind, seeds: int, agents: int, rngs) -> np.ndarray:
    """Logit initializations shaped (seeds, agents, 5)."""
    if isinstance(kind, str):
        if kind == "random":
            return np.stack([r.normal(size=(agents, 5)) for r in rngs])
        if kind == "defect":
            return np.full((seeds, agents, 5), probs_to_logits(DEFECT_PROB))
        if kind == "tft":
            return np.broadcast_to(probs_to_logits(TFT_PROBS), (seeds, agents, 5)).copy()
        raise ValueError(f"unknown initialization {kind!r}")
    arr = np.asarray(kind, dtype=np.float64)
    return np.broadcast_to(arr, (seeds, agents, 5)).copy()


def _check_finite(x, step: int, what: str):
    if not np.all(np.isfinite(x)):
        raise NumericAbort(f"non-finite {what} at step {step}: {x[~np.isfinite(x)][:4]}")


def _other(phi: np.ndarray) -> np.ndarray:
    return phi[:, ::-1] if phi.shape[1] == 2 else phi


def mixed_group_train(config: MixedGroupConfig, init1="random", init2=None) -> Trace:
    """Train meta agents against fresh naive learners and each other.

    The update direction for each agent is
    ``p_naive * mean_k(shaping gradient vs naive k) + (1 - p_naive) * dJ/dphi vs the other agent``,
    applied with AdamW ascent.  Seeds are batched along the leading axis.
    """
    cfg = config
    payoffs = cfg.payoffs
    rngs = seed_streams(cfg.seed, cfg.seeds)
    init_rngs = seed_streams(cfg.seed + 10_000, cfg.seeds)
    phi = initial_policies(init1, cfg.seeds, cfg.agents, init_rngs)
    if init2 is not None and cfg.agents == 2:
        phi[:, 1] = initial_policies(init2, cfg.seeds, 1, init_rngs)[:, 0]
    opt = adamw(cfg.eta_meta, cfg.weight_decay)
    state = opt.init(phi)
    trace = Trace()
    for step in range(cfg.steps + 1):
        p = cfg.p_naive_at(step)
        if step == cfg.switch_step and cfg.reset_optimizer_on_switch:
            # moment estimates from the previous phase would otherwise stall the new one
            state = opt.init(phi)
        log_now = step % cfg.log_every == 0 or step == cfg.steps
        psi0 = np.stack([r.normal(scale=cfg.naive_init_std, size=(cfg.agents, cfg.metabatch, 5)) for r in rngs])
        g_shape = 0.0
        if p > 0.0 or log_now:
            shaping, naive_r, g = shaping_value_and_gradient(
                phi[:, :, None, :], psi0, payoffs, cfg.naive_steps, cfg.eta_naive, cfg.naive_objective,
                per_step_return=cfg.per_step_return)
            g_shape = g.mean(axis=2)
            g_shape = cfg.shaping_scale * g_shape
        if log_now:
            j_other = expected_return(phi, _other(phi), payoffs)[0]
            trace.steps.append(step)
            trace.params.append(phi.copy())
            trace.shaping_reward.append(shaping.mean(axis=2))
            trace.naive_reward.append(naive_r.mean(axis=2))
            trace.otherplay_reward.append(per_step(j_other, payoffs))
        if step == cfg.steps:
            break
        grad = p * g_shape
        if p < 1.0:
            grad = grad + (1.0 - p) * partial_gradient(phi, _other(phi), payoffs)
        _check_finite(grad, step, "gradient")
        phi, state = opt.update(phi, -grad, state)
        _check_finite(phi, step, "parameters")
    return trace


@dataclass(frozen=True)
class LolaConfig:
    lookahead: int = 1
    alpha: float = 10.0
    p_naive: float = 1.0
    eta_meta: float = 0.005
    steps: int = 1000
    seeds: int = 32
    seed: int = 0
    gamma: float = 0.95
    weight_decay: float = 1e-4
    naive_objective: str = "own"
    per_step_return: bool = True
    log_every: int = 10

    @property
    def payoffs(self) -> IpdPayoffs:
        return IpdPayoffs(DEFAULT_PAYOFFS.r1, DEFAULT_PAYOFFS.r2, self.gamma)


def default_lookahead_rate(lookahead: int) -> float:
    return 10.0 if lookahead == 1 else 5.0


def lola_train(config: LolaConfig, init="random") -> Trace:
    """Two look-ahead learners trained against each other with exact gradients."""
    cfg = config
    payoffs = cfg.payoffs
    phi = initial_policies(init, cfg.seeds, 2, seed_streams(cfg.seed + 10_000, cfg.seeds))
    opt = adamw(cfg.eta_meta, cfg.weight_decay)
    state = opt.init(phi)
    trace = Trace()
    for step in range(cfg.steps + 1):
        if step % cfg.log_every == 0 or step == cfg.steps:
            j_other = per_step(expected_return(phi, _other(phi), payoffs)[0], payoffs)
            trace.steps.append(step)
            trace.params.append(phi.copy())
            trace.shaping_reward.append(np.full(phi.shape[:2], np.nan))
            trace.naive_reward.append(np.full(phi.shape[:2], np.nan))
            trace.otherplay_reward.append(j_other)
        if step == cfg.steps:
            break
        grad = mixed_lola_gradient(phi, _other(phi), payoffs, cfg.lookahead, cfg.alpha, cfg.p_naive,
                                   cfg.naive_objective, cfg.per_step_return)
        _check_finite(grad, step, "gradient")
        phi, state = opt.update(phi, -grad, state)
        _check_finite(phi, step, "parameters")
    return trace


def train_naive_against(phi_fixed, psi_init, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, steps: int = 200,
                        eta: float = ETA_NAIVE, per_step_return: bool = True):
    """Plain gradient ascent of a naive learner against a frozen policy.

    Returns per-step rewards ``(fixed, naive)`` after each update, shaped (steps + 1, ...).
    """
    psi = np.asarray(psi_init, dtype=np.float64)
    fixed_r, naive_r = [], []
    for i in range(steps + 1):
        j1, j2 = expected_return(phi_fixed, psi, payoffs)
        fixed_r.append(per_step(j1, payoffs))
        naive_r.append(per_step(j2, payoffs))
        if i < steps:
            psi = naive_step(psi, phi_fixed, payoffs, eta, per_step_return=per_step_return)
    return np.asarray(fixed_r), np.asarray(naive_r)


def nash_probe(probs1, probs2, p_naive: float, metabatch: int = 8, rng=None, payoffs: IpdPayoffs = DEFAULT_PAYOFFS,
               naive_steps: int = 20, eta_naive: float = ETA_NAIVE, eta: float = 1.0) -> np.ndarray:
    """Projected mixed-group gradient step for agent 1, in probability space.

    Returns ``projected_ascent_step(probs1, g, eta) - probs1``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    probs1 = np.asarray(probs1, dtype=np.float64)
    psi0 = rng.normal(size=(metabatch, 5))
    _, _, g = shaping_value_and_gradient(probs1[None, :], psi0, payoffs, naive_steps, eta_naive,
                                         meta_is_prob=True)
    grad = p_naive * g.mean(axis=0)
    if p_naive < 1.0:
        grad = grad + (1.0 - p_naive) * partial_gradient(probs1, np.asarray(probs2, dtype=np.float64), payoffs,
                                                         meta_is_prob=True)
    return projected_ascent_step(probs1, grad, eta) - probs1
