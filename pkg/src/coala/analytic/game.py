"""Closed-form infinitely iterated prisoner's dilemma with tabular policies.

A policy is a 5-vector of cooperate logits, ordered (initial, CC, CD, DC, DD)
from the owner's point of view: in state "CD" the owner cooperated and the
co-player defected.  Joint states are indexed in agent 1's order.  All
functions broadcast over leading axes and accept dual numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import dual as D
from ..autodiff import grad_forward
from ..autodiff.linalg import SingularMatrixError, solve_linear

STATES = ("CC", "CD", "DC", "DD")
# swaps CD and DC in a 4-vector over joint states
STATE_MIRROR = np.array([0, 2, 1, 3])
# reorders agent 2's own-view logits into agent 1's state order
_OTHER_VIEW = np.array([0, 1, 3, 2, 4])


@dataclass(frozen=True)
class IpdPayoffs:
    r1: tuple = (1.0, -1.0, 2.0, 0.0)
    r2: tuple = (1.0, 2.0, -1.0, 0.0)
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if len(self.r1) != 4 or len(self.r2) != 4:
            raise ValueError("payoff vectors need one entry per joint state")

    @classmethod
    def from_game(cls, reward=1.0, sucker=-1.0, temptation=2.0, punishment=0.0, gamma=0.95):
        """Symmetric 2x2 game from the usual (R, S, T, P) entries."""
        return cls((reward, sucker, temptation, punishment),
                   (reward, temptation, sucker, punishment), gamma)

    def swapped(self) -> "IpdPayoffs":
        """Payoffs seen from agent 2's seat, so agent 2 can be treated as agent 1."""
        r1 = np.asarray(self.r1)[STATE_MIRROR]
        r2 = np.asarray(self.r2)[STATE_MIRROR]
        return IpdPayoffs(tuple(r2), tuple(r1), self.gamma)

    @property
    def return_bounds(self) -> tuple[float, float]:
        rs = np.concatenate([self.r1, self.r2])
        return float(rs.min()) / (1 - self.gamma), float(rs.max()) / (1 - self.gamma)


DEFAULT_PAYOFFS = IpdPayoffs()
# naive learning rate on the per-step return
ETA_NAIVE = 10.0


def markov_from_probs(p1, p2):
    """Transition matrix and initial distribution from cooperate probabilities.

    Returns ``(M, s0)`` where ``M[..., next, src]`` is column-stochastic.
    """
    q = p2[..., _OTHER_VIEW]
    ps, qs = p1[..., 1:], q[..., 1:]
    markov = D.stack([ps * qs, ps * (1.0 - qs), (1.0 - ps) * qs, (1.0 - ps) * (1.0 - qs)], axis=-2)
    p0, q0 = p1[..., 0], q[..., 0]
    s0 = D.stack([p0 * q0, p0 * (1.0 - q0), (1.0 - p0) * q0, (1.0 - p0) * (1.0 - q0)], axis=-1)
    return markov, s0


def markov_and_s0(phi1, phi2):
    return markov_from_probs(D.sigmoid(phi1), D.sigmoid(phi2))


def discounted_visitation(markov, s0, gamma: float):
    """(I - gamma M)^-1 s0, the discounted state occupancy."""
    try:
        return solve_linear(np.eye(4) - gamma * markov, s0)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"I - gamma*M is singular; transition matrix is not stochastic ({exc})") from None


def returns_from_probs(p1, p2, payoffs: IpdPayoffs = DEFAULT_PAYOFFS):
    markov, s0 = markov_from_probs(p1, p2)
    occ = discounted_visitation(markov, s0, payoffs.gamma)
    return D.dot(occ, np.asarray(payoffs.r1)), D.dot(occ, np.asarray(payoffs.r2))


def expected_return(phi1, phi2, payoffs: IpdPayoffs = DEFAULT_PAYOFFS):
    """Exact discounted returns ``(J1, J2)`` for two logit policies."""
    return returns_from_probs(D.sigmoid(phi1), D.sigmoid(phi2), payoffs)


def per_step(ret, payoffs: IpdPayoffs = DEFAULT_PAYOFFS):
    """Normalize a discounted return to an average per-step reward."""
    return ret * (1.0 - payoffs.gamma)


def _returns(meta, naive_logits, payoffs, meta_is_prob: bool):
    """Returns with the meta policy given either as logits or as probabilities."""
    p1 = meta if meta_is_prob else D.sigmoid(meta)
    return returns_from_probs(p1, D.sigmoid(naive_logits), payoffs)


def partial_gradient(phi_self, phi_other, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, meta_is_prob: bool = False):
    """dJ1/dphi_self with the co-player held fixed."""
    if meta_is_prob:
        return grad_forward(lambda p: returns_from_probs(p, phi_other, payoffs)[0], phi_self)
    return grad_forward(lambda p: expected_return(p, phi_other, payoffs)[0], phi_self)


def _naive_return(phi_meta, phi_naive, payoffs, objective: str, meta_is_prob: bool = False):
    j1, j2 = _returns(phi_meta, phi_naive, payoffs, meta_is_prob)
    if objective == "own":
        return j2
    if objective == "shaper":
        return j1
    raise ValueError(f"unknown naive objective {objective!r}")


def naive_step(phi_naive, phi_other, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, eta: float = ETA_NAIVE,
               objective: str = "own", meta_is_prob: bool = False, per_step_return: bool = True):
    """One gradient-ascent step of a naive learner seated as agent 2.

    ``objective="own"`` ascends the learner's own return; ``"shaper"`` ascends
    the co-player's return instead (the literal alternative reading).  With
    ``per_step_return`` the ascended quantity is the average per-step reward
    ``(1 - gamma) J``; otherwise the raw discounted return ``J``.
    """
    g = grad_forward(lambda p: _naive_return(phi_other, p, payoffs, objective, meta_is_prob), phi_naive)
    scale = (1.0 - payoffs.gamma) if per_step_return else 1.0
    return phi_naive + (eta * scale) * g


def naive_trajectory(phi_meta, phi_naive_init, payoffs, steps: int, eta: float, objective: str = "own",
                     meta_is_prob: bool = False, per_step_return: bool = True):
    """Naive parameters after 0..steps updates against a fixed meta policy."""
    traj = [phi_naive_init]
    for _ in range(steps):
        traj.append(naive_step(traj[-1], phi_meta, payoffs, eta, objective, meta_is_prob, per_step_return))
    return traj


def shaping_objective(phi_meta, phi_naive_init, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, steps: int = 20,
                      eta_naive: float = ETA_NAIVE, objective: str = "own", per_step_return: bool = True):
    """Sum over m = 0..steps of the meta return against the m-times-updated naive learner."""
    total = 0.0
    for psi in naive_trajectory(phi_meta, phi_naive_init, payoffs, steps, eta_naive, objective,
                                per_step_return=per_step_return):
        total = total + expected_return(phi_meta, psi, payoffs)[0]
    return total


def shaping_gradient(phi_meta, phi_naive_init, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, steps: int = 20,
                     eta_naive: float = ETA_NAIVE, objective: str = "own", per_step_return: bool = True):
    """Total derivative of ``shaping_objective`` through the unrolled naive updates."""
    return grad_forward(
        lambda p: shaping_objective(p, phi_naive_init, payoffs, steps, eta_naive, objective, per_step_return),
        phi_meta)


def shaping_value_and_gradient(phi_meta, phi_naive_init, payoffs: IpdPayoffs = DEFAULT_PAYOFFS,
                               steps: int = 20, eta_naive: float = ETA_NAIVE, objective: str = "own",
                               meta_is_prob: bool = False, per_step_return: bool = True):
    """Per-step meta and naive rewards averaged over the learning trajectory, plus the gradient."""
    rewards = {}

    def objective_fn(p):
        total, naive_total = 0.0, 0.0
        for psi in naive_trajectory(p, phi_naive_init, payoffs, steps, eta_naive, objective, meta_is_prob,
                                    per_step_return):
            j1, j2 = _returns(p, psi, payoffs, meta_is_prob)
            total = total + j1
            naive_total = naive_total + j2
        rewards["naive"] = D.primal(naive_total)
        return total

    value, grad = D.value_and_grad_forward(objective_fn, phi_meta)
    scale = (1.0 - payoffs.gamma) / (steps + 1)
    return D.primal(value) * scale, rewards["naive"] * scale, grad


def lola_objective(phi_i, phi_minus_i, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, lookahead: int = 1,
                   alpha: float = 5.0, objective: str = "own", per_step_return: bool = True):
    """Return of agent i after the co-player takes ``lookahead`` simulated naive steps."""
    psi = naive_trajectory(phi_i, phi_minus_i, payoffs, lookahead, alpha, objective,
                           per_step_return=per_step_return)[-1]
    return expected_return(phi_i, psi, payoffs)[0]


def lola_dice_gradient(phi_i, phi_minus_i, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, lookahead: int = 1,
                       alpha: float = 5.0, objective: str = "own", per_step_return: bool = True):
    """Total derivative of ``lola_objective`` w.r.t. ``phi_i``, through every look-ahead step."""
    if lookahead < 0:
        raise ValueError("lookahead must be non-negative")
    return grad_forward(
        lambda p: lola_objective(p, phi_minus_i, payoffs, lookahead, alpha, objective, per_step_return), phi_i)


def mixed_lola_gradient(phi_i, phi_minus_i, payoffs: IpdPayoffs = DEFAULT_PAYOFFS, lookahead: int = 1,
                        alpha: float = 5.0, p_naive: float = 1.0, objective: str = "own",
                        per_step_return: bool = True):
    """Convex mixture of the look-ahead gradient and the plain partial gradient."""
    g = lola_dice_gradient(phi_i, phi_minus_i, payoffs, lookahead, alpha, objective, per_step_return)
    if p_naive == 1.0:
        return g
    return p_naive * g + (1.0 - p_naive) * partial_gradient(phi_i, phi_minus_i, payoffs)


def projected_ascent_step(probs, grad, eta: float):
    """Gradient ascent in probability space followed by clipping to [0, 1]."""
    return np.clip(np.asarray(probs) + eta * np.asarray(grad), 0.0, 1.0)


def probs_to_logits(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return np.log(probs) - np.log1p(-probs)
