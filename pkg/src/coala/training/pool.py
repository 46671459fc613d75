"""Agent pools and opponent sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy import init_params


@dataclass(frozen=True)
class Opponent:
    kind: str   # "naive" or "meta"
    index: int


@dataclass
class AgentPool:
    meta: list
    naive: list
    meta_opt_states: list
    dynamic_naive: bool = False

    def refresh_naive(self, rng: np.random.Generator) -> None:
        """Copy current meta parameters into every naive slot (uniform choice per slot)."""
        picks = rng.integers(0, len(self.meta), size=len(self.naive))
        self.naive = [{k: v.copy() for k, v in self.meta[i].items()} for i in picks]


def build_pool(rng: np.random.Generator, obs_dim: int, n_actions: int, meta_population: int,
               naive_population: int, width: int, optimizer, dynamic_naive: bool = False) -> AgentPool:
    meta = [init_params(rng, obs_dim, n_actions, width) for _ in range(meta_population)]
    naive = [init_params(rng, obs_dim, n_actions, width) for _ in range(naive_population)]
    return AgentPool(meta, naive, [optimizer.init(p) for p in meta], dynamic_naive)


def sample_opponent(pool: AgentPool, p_naive: float, self_id: int, rng: np.random.Generator) -> Opponent:
    """Naive with probability ``p_naive``, else another meta agent; uniform within the pool.

    Sampling is with replacement; an agent never draws itself.
    """
    if rng.random() < p_naive:
        if not pool.naive:
            raise ValueError("naive pool is empty")
        return Opponent("naive", int(rng.integers(len(pool.naive))))
    others = [i for i in range(len(pool.meta)) if i != self_id]
    if not others:
        raise ValueError("meta pool has no agent other than the learner")
    return Opponent("meta", others[int(rng.integers(len(others)))])
