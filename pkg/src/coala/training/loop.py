"""Population training loop, evaluation and checkpointing."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..envs import make_env
from ..optim import make_optimizer
from ..policy import load_checkpoint, save_checkpoint, stack_params
from .config import TrainConfig
from .metrics import MetricsWriter, summarize_by_kind
from .pool import AgentPool, build_pool, sample_opponent
from .rollout import MetaEpisodeRecord, run_meta_episode
from .update import meta_update

# stream tags keep the RNG streams of different purposes apart
_OPPONENTS, _ROLLOUT, _UPDATE, _REFRESH, _INIT, _EVAL = range(6)


@dataclass
class TrainResult:
    pool: AgentPool
    rows: list = field(default_factory=list)
    stats: list = field(default_factory=list)


def _env(cfg: TrainConfig):
    return make_env(cfg.env, cfg.inner_length)


def _chunk_task(args):
    meta_params, opp_sets, is_naive, index, cfg, rng_key = args
    rng = np.random.default_rng(rng_key)
    return run_meta_episode(meta_params, stack_params(opp_sets), is_naive, _env(cfg), cfg.batch_size,
                            cfg.inner_episodes, cfg.inner_length, rng, cfg.naive, index)


def _map(tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [_chunk_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_chunk_task, tasks))


def collect(pool: AgentPool, cfg: TrainConfig, iteration: int, agent: int, p_naive=None, tag: int = 0):
    """Sample ``meta_batch`` opponents for one meta agent and roll out in fixed chunks.

    Each chunk draws from its own generator keyed by (seed, tag, iteration,
    agent, chunk), so records do not depend on the worker count.
    """
    p = cfg.p_naive if p_naive is None else p_naive
    opp_rng = np.random.default_rng([cfg.seed, tag or _OPPONENTS, iteration, agent])
    draws = [sample_opponent(pool, p, agent, opp_rng) for _ in range(cfg.meta_batch)]
    tasks = []
    for c, start in enumerate(range(0, cfg.meta_batch, cfg.chunk_size)):
        chunk = draws[start:start + cfg.chunk_size]
        sets = [pool.naive[d.index] if d.kind == "naive" else pool.meta[d.index] for d in chunk]
        is_naive = np.array([d.kind == "naive" for d in chunk])
        index = np.array([d.index for d in chunk])
        tasks.append((pool.meta[agent], sets, is_naive, index, cfg,
                      [cfg.seed, (tag or _OPPONENTS) + _ROLLOUT, iteration, agent, c]))
    return MetaEpisodeRecord.concatenate(_map(tasks, cfg.workers))


def _optimizer(cfg: TrainConfig):
    return make_optimizer(cfg.optimizer, cfg.lr, cfg.adam_eps)


def init_pool(cfg: TrainConfig) -> AgentPool:
    env = _env(cfg)
    rng = np.random.default_rng([cfg.seed, _INIT])
    return build_pool(rng, env.obs_dim, env.n_actions, cfg.meta_population, cfg.naive_population, cfg.width,
                      _optimizer(cfg), cfg.dynamic_naive)


def checkpoint_pool(pool: AgentPool, directory, cfg: TrainConfig, iteration: int) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, params in enumerate(pool.meta):
        path = os.path.join(directory, f"meta{i}_iter{iteration:06d}.npz")
        save_checkpoint(path, params, cfg.fingerprint(), {"iteration": iteration, "agent": i})
        paths.append(path)
    return paths


def load_pool_checkpoints(paths) -> list[dict]:
    return [load_checkpoint(p)[0] for p in paths]


def train(cfg: TrainConfig, metrics_path=None, checkpoint_dir=None, pool: AgentPool | None = None,
          diagnostics=None) -> TrainResult:
    """Run ``cfg.iterations`` population iterations.

    Every iteration optionally refreshes dynamic naive agents, rolls out all
    meta agents against sampled opponents with the parameters from the start
    of the iteration, then updates every meta agent from its own records.
    ``diagnostics(params, record, cfg)`` may return a gradient-balance ratio.
    """
    cfg = cfg.validate()
    pool = pool or init_pool(cfg)
    opt = _optimizer(cfg)
    writer = MetricsWriter(metrics_path) if metrics_path else None
    result = TrainResult(pool)
    try:
        for it in range(cfg.iterations):
            if pool.dynamic_naive:
                pool.refresh_naive(np.random.default_rng([cfg.seed, _REFRESH, it]))
            records = [collect(pool, cfg, it, i) for i in range(len(pool.meta))]
            ratio = None
            if diagnostics is not None and cfg.diagnostics_every and it % cfg.diagnostics_every == 0:
                ratio = diagnostics(pool.meta[0], records[0], cfg)
            new_meta, new_states, it_stats = [], [], []
            for i, rec in enumerate(records):
                rng = np.random.default_rng([cfg.seed, _UPDATE, it, i])
                params, state, stats = meta_update(pool.meta[i], opt, pool.meta_opt_states[i], rec, cfg, rng)
                new_meta.append(params)
                new_states.append(state)
                it_stats.append(stats)
            pool.meta, pool.meta_opt_states = new_meta, new_states
            result.stats.append(it_stats)
            for kind, summary in summarize_by_kind(records, cfg.env).items():
                row = {"iter": it, "seed": cfg.seed, "phase": "train", "opponent_kind": kind, **summary}
                if ratio is not None and kind == records[0].opponent_kind[0]:
                    row["grad_ratio"] = ratio
                result.rows.append(row)
                if writer:
                    writer.write(row)
            if checkpoint_dir and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                checkpoint_pool(pool, checkpoint_dir, cfg, it + 1)
    finally:
        if writer:
            writer.close()
    return result


def evaluate_pool(pool: AgentPool, cfg: TrainConfig, matchups=("naive", "meta"), episodes: int | None = None,
                  iteration: int = 0) -> list[dict]:
    """Average metrics per matchup kind with frozen meta agents.

    ``naive`` plays every meta agent against fresh naive learners from the
    pool; ``meta`` plays meta agents against each other (needs two or more).
    """
    rows = []
    units = episodes or cfg.meta_batch
    eval_cfg = cfg.__class__(**{**cfg.__dict__, "meta_batch": units})
    for kind in matchups:
        if kind == "meta" and len(pool.meta) < 2:
            continue
        p = 1.0 if kind == "naive" else 0.0
        recs = [collect(pool, eval_cfg, iteration, i, p_naive=p, tag=_EVAL * 10) for i in range(len(pool.meta))]
        summary = summarize_by_kind(recs, cfg.env)[kind]
        rows.append({"iter": iteration, "seed": cfg.seed, "phase": "eval", "opponent_kind": kind, **summary})
    return rows
