"""Exact enumeration oracle for score-function estimators on a tiny batched game.

The game is the one-shot prisoner's dilemma played as ``M`` inner episodes of
length ``T = 1`` in ``B`` parallel trajectories.  The meta agent has a tabular
cooperate-logit policy.  With ``history`` conditioning it uses 5 logits
(first episode, then the previous joint outcome of its own trajectory).  With
``episode`` conditioning it uses a single logit, since an inner episode of
length one carries no history.  The naive co-player has one cooperate logit
and after every inner episode but the last takes one exact A2C-style step on
that episode's batch:

    psi <- psi + alpha * mean_b (r_b - mean r) * d/dpsi log pi_psi(a_b)

Every outcome of the meta-episode is enumerated, so expectations are exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autodiff import dual as D
from .autodiff import grad_forward, grad_nested
from .envs.ipd import REWARDS
from .estimators import MODES, reinforce_gradient

CONDITIONING = ("history", "episode")


@dataclass(frozen=True)
class MicroGame:
    batch: int = 2
    episodes: int = 2
    alpha: float = 2.0
    psi0: float = 0.0
    conditioning: str = "history"

    def __post_init__(self):
        if self.batch < 1 or self.episodes < 1:
            raise ValueError("batch and episodes must be positive")
        if 2 * self.batch * self.episodes > 12:
            raise ValueError("outcome tree too large to enumerate")
        if self.conditioning not in CONDITIONING:
            raise ValueError(f"conditioning must be one of {CONDITIONING}")

    @property
    def n_params(self) -> int:
        return 5 if self.conditioning == "history" else 1

    @property
    def n_leaves(self) -> int:
        return 4 ** (self.batch * self.episodes)


def enumerate_outcomes(game: MicroGame):
    """All joint action sequences: ``(meta_actions, naive_actions)``, each (N, M, B); 1 = defect."""
    n = 2 * game.batch * game.episodes
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    bits = bits.reshape(-1, game.episodes, game.batch, 2)
    return bits[..., 0], bits[..., 1]


def meta_states(game: MicroGame, meta_actions, naive_actions) -> np.ndarray:
    """Policy-table index used for each meta action, (N, M, B)."""
    states = np.zeros_like(meta_actions)
    if game.conditioning == "history":
        states[:, 1:] = 1 + 2 * meta_actions[:, :-1] + naive_actions[:, :-1]
    return states


def _naive_score(psi, action):
    """d/dpsi log pi_psi(action) for a cooperate-logit policy."""
    p = expit(psi)
    return np.where(action == 0, 1.0 - p, -p)


def naive_update(game: MicroGame, psi, meta_actions, naive_actions):
    """Exact A2C-style step on one inner batch; arrays are (..., B)."""
    r = REWARDS[meta_actions, naive_actions, 1]
    adv = r - r.mean(axis=-1, keepdims=True)
    return psi + game.alpha * np.mean(adv * _naive_score(psi[..., None], naive_actions), axis=-1)


def naive_parameters(game: MicroGame, meta_actions, naive_actions) -> np.ndarray:
    """Naive logit in force during each inner episode, (N, M)."""
    N = meta_actions.shape[0]
    psi = np.empty((N, game.episodes))
    psi[:, 0] = game.psi0
    for m in range(1, game.episodes):
        psi[:, m] = naive_update(game, psi[:, m - 1], meta_actions[:, m - 1], naive_actions[:, m - 1])
    return psi


def _action_prob(p_coop, action):
    return D.where(action == 0, p_coop, 1.0 - p_coop)


def _product(x, n_axes: int):
    """Product over the trailing ``n_axes`` axes of a dual or plain array."""
    tail = D.shape_of(x)[-n_axes:]
    out = None
    for idx in np.ndindex(*tail):
        term = x[(Ellipsis,) + idx]
        out = term if out is None else out * term
    return out


def _tree(game: MicroGame):
    a1, a2 = enumerate_outcomes(game)
    states = meta_states(game, a1, a2)
    psi = naive_parameters(game, a1, a2)
    p_naive = _product(np.where(a2 == 0, expit(psi)[..., None], 1.0 - expit(psi)[..., None]), 2)
    return a1, a2, states, p_naive


def expected_return(theta, game: MicroGame):
    """Exact ``E[(1/B) sum_b sum_m r_m^b]`` for the meta agent; ``theta`` may be a dual."""
    a1, a2, states, p_naive = _tree(game)
    p_coop = D.sigmoid(theta)[states]
    p_meta = _product(_action_prob(p_coop, a1), 2)
    ret = REWARDS[a1, a2, 0].sum(axis=1).mean(axis=-1)
    return D.sum_(p_meta * (p_naive * ret))


def exact_gradient(theta, game: MicroGame) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (game.n_params,):
        raise ValueError(f"theta must have shape ({game.n_params},)")
    return grad_forward(lambda t: expected_return(t, game), theta)


def leaf_probabilities(theta, game: MicroGame) -> np.ndarray:
    a1, a2, states, p_naive = _tree(game)
    p_coop = expit(np.asarray(theta, dtype=np.float64))[states]
    return np.prod(np.where(a1 == 0, p_coop, 1.0 - p_coop), axis=(1, 2)) * p_naive


def enumerated_estimator(theta, game: MicroGame, mode: str) -> np.ndarray:
    """Exact expectation of the raw-return score-function estimator for ``mode``."""
    theta = np.asarray(theta, dtype=np.float64)
    a1, a2, states, _ = _tree(game)
    p_coop = expit(theta)[states]
    score = np.where(a1 == 0, 1.0 - p_coop, -p_coop)                     # (N, M, B)
    grads = np.eye(game.n_params)[states] * score[..., None]              # (N, M, B, P)
    rewards = REWARDS[a1, a2, 0]
    per_leaf = reinforce_gradient(rewards.transpose(0, 2, 1), grads.transpose(0, 2, 1, 3), 1, mode)
    return leaf_probabilities(theta, game) @ per_leaf


def _one_shot_return(p_meta, psi):
    """Expected meta reward of one round: meta cooperates w.p. ``p_meta``, naive w.p. sigmoid(psi)."""
    q = expit(psi)
    r = REWARDS[..., 0]
    return (p_meta * (q * r[0, 0] + (1 - q) * r[0, 1])
            + (1.0 - p_meta) * (q * r[1, 0] + (1 - q) * r[1, 1]))


def _naive_step_nested(game: MicroGame, psi: float, meta_actions, naive_actions) -> float:
    """Naive A2C step with the log-likelihood gradient taken by an inner derivative."""
    r = REWARDS[meta_actions, naive_actions, 1]
    adv = r - r.mean()

    def surrogate(x):
        p = D.sigmoid(x[..., 0])
        logp = D.log(D.where(naive_actions == 0, p, 1.0 - p))
        return D.sum_(logp * adv) * (1.0 / game.batch)

    return psi + game.alpha * float(D.primal(grad_forward(surrogate, np.array([psi])))[0])


def lookahead_objective(theta, game: MicroGame):
    """``sum_m E[J(theta, psi_m)]`` with ``psi_m`` the naive logit after ``m`` batch updates.

    Only valid for ``episode`` conditioning, where every inner episode is an
    independent round of the one-shot game.
    """
    if game.conditioning != "episode":
        raise ValueError("the look-ahead form needs episode conditioning")
    p = D.sigmoid(theta)[0]
    outcomes = list(itertools.product((0, 1), repeat=2 * game.batch))

    def expand(m, psi, weight):
        total = weight * _one_shot_return(p, psi)
        if m + 1 == game.episodes:
            return total
        q = expit(psi)
        for bits in outcomes:
            acts = np.array(bits).reshape(game.batch, 2)
            a1, a2 = acts[:, 0], acts[:, 1]
            pr = weight
            for b in range(game.batch):
                pr = pr * (p if a1[b] == 0 else 1.0 - p) * (q if a2[b] == 0 else 1.0 - q)
            total = total + expand(m + 1, _naive_step_nested(game, psi, a1, a2), pr)
        return total

    return expand(0, game.psi0, 1.0)


def lookahead_gradient(theta, game: MicroGame) -> np.ndarray:
    """Total derivative of ``lookahead_objective`` by nested forward mode."""
    return grad_nested(lambda t: lookahead_objective(t, game), np.asarray(theta, dtype=np.float64))


@dataclass(frozen=True)
class EnumerationReport:
    exact: np.ndarray
    estimates: dict
    errors: dict

    def gap(self, mode: str) -> float:
        return self.errors[mode]


def unbiasedness_report(theta, game: MicroGame) -> EnumerationReport:
    """Max-abs error of each mode's exact expectation against the true gradient."""
    exact = exact_gradient(theta, game)
    est = {mode: enumerated_estimator(theta, game, mode) for mode in MODES}
    errs = {mode: float(np.max(np.abs(v - exact))) for mode, v in est.items()}
    return EnumerationReport(exact, est, errs)
