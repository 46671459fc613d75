"""Named analytic IPD experiments with fixed recipes and summary statistics."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .game import shaping_value_and_gradient
from .train import (
    LOLA_MIXTURE,
    LolaConfig,
    MixedGroupConfig,
    Trace,
    default_lookahead_rate,
    lola_train,
    mixed_group_train,
    seed_streams,
    train_naive_against,
)
from .zd import fit_zd

EXPERIMENTS = ("finding1", "finding2", "finding3", "lola-sweep", "zd-fit", "defect-init", "tft-init")
LOOKAHEADS = (1, 2, 3, 10, 20)


def evaluate_shaping(phi, config: MixedGroupConfig, learners: int = 64, seed: int = 99):
    """Per-step shaping and naive rewards of each policy in ``phi`` (..., 5) against fresh naive learners."""
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.random.default_rng(seed).normal(scale=config.naive_init_std, size=(learners, 5))
    shaping, naive, _ = shaping_value_and_gradient(phi[..., None, :], psi, config.payoffs, config.naive_steps,
                                                   config.eta_naive, config.naive_objective,
                                                   per_step_return=config.per_step_return)
    return shaping.mean(axis=-1), naive.mean(axis=-1)


def finding1(seeds: int = 32, steps: int = 1000, seed: int = 0, **overrides):
    """One learning-aware agent from pure defection against fresh naive learners."""
    cfg = MixedGroupConfig(p_naive=1.0, agents=1, seeds=seeds, steps=steps, seed=seed, metabatch=4,
                           log_every=50, **overrides)
    trace = mixed_group_train(cfg, "defect")
    shaping, naive = evaluate_shaping(trace.final("params")[:, 0], cfg)
    ok = (shaping > 1.0) & (naive > 0.0)
    return trace, {"shaping_reward": shaping.tolist(), "naive_reward": naive.tolist(),
                   "fraction_extorting": float(ok.mean())}


def finding2(seeds: int = 8, switch_step: int = 700, otherplay_steps: int = 600, seed: int = 0, **overrides):
    """Train two agents against naive learners, then against each other only."""
    cfg = MixedGroupConfig(p_naive=1.0, agents=2, seeds=seeds, steps=switch_step + otherplay_steps, seed=seed,
                           metabatch=4, log_every=50, switch_step=switch_step, p_naive_after=0.0, **overrides)
    trace = mixed_group_train(cfg, "random")
    before = trace.otherplay_reward[trace.steps.index(switch_step)]
    after = trace.final("otherplay_reward")
    return trace, {"otherplay_at_switch": np.median(before, axis=0).tolist(),
                   "otherplay_final": np.median(after, axis=0).tolist(),
                   "shaping_at_switch": float(np.median(trace.shaping_reward[trace.steps.index(switch_step)]))}


def finding3(p_naive: float = 0.75, seeds: int = 8, steps: int = 1000, seed: int = 0, init="random", **overrides):
    """Two agents trained against naive learners (weight ``p_naive``) and each other."""
    cfg = MixedGroupConfig(p_naive=p_naive, agents=2, seeds=seeds, steps=steps, seed=seed, metabatch=4,
                           log_every=50, **overrides)
    trace = mixed_group_train(cfg, init)
    final = trace.final("otherplay_reward")
    return trace, {"p_naive": p_naive, "otherplay_final_median": float(np.median(final)),
                   "shaping_final_median": float(np.median(trace.final("shaping_reward")))}


def lola_run(lookahead: int, seeds: int = 8, steps: int = 1000, seed: int = 0, mixture: bool = False,
             **overrides):
    p = LOLA_MIXTURE.get(lookahead, 1.0) if mixture else 1.0
    cfg = LolaConfig(lookahead=lookahead, alpha=default_lookahead_rate(lookahead), p_naive=p, seeds=seeds,
                     steps=steps, seed=seed, log_every=50, **overrides)
    return cfg, lola_train(cfg, "random")


def lola_sweep(lookaheads=LOOKAHEADS, seeds: int = 8, steps: int = 1000, seed: int = 0, mixture: bool = False):
    """Other-play reward of LOLA pairs per look-ahead count, plus an extortion probe at the largest."""
    traces, summary = {}, {}
    for k in lookaheads:
        cfg, trace = lola_run(k, seeds, steps, seed, mixture)
        traces[k] = trace
        summary[k] = float(np.median(trace.final("otherplay_reward")))
    out = {"otherplay_median": summary, "mixture": mixture}
    if not mixture:
        k = max(lookaheads)
        cfg, _ = lola_run(k, 1, 0, seed)
        fixed = traces[k].final("params")[:, 0]
        psi = np.stack([r.normal(size=5) for r in seed_streams(seed + 20_000, fixed.shape[0])])
        lola_r, naive_r = train_naive_against(fixed, psi, cfg.payoffs, steps=200, eta=cfg.alpha,
                                              per_step_return=cfg.per_step_return)
        out["probe_lola_reward"] = float(np.median(lola_r[-1]))
        out["probe_naive_reward"] = float(np.median(naive_r[-1]))
    return traces, out


def zd_fit(seeds: int = 8, steps: int = 1000, seed: int = 0, random_policies: int = 256):
    """ZD fit losses of converged shaping policies versus uniform-random policies."""
    cfg = MixedGroupConfig(p_naive=1.0, agents=1, seeds=seeds, steps=steps, seed=seed, metabatch=4, log_every=50)
    trace = mixed_group_train(cfg, "random")
    trained = expit(trace.final("params")[:, 0, 1:])
    rand = np.random.default_rng([seed, 7]).random((random_policies, 4))
    trained_loss = [fit_zd(p)[2] for p in trained]
    random_loss = [fit_zd(p)[2] for p in rand]
    return trace, {"trained_median_loss": float(np.median(trained_loss)),
                   "random_median_loss": float(np.median(random_loss)),
                   "trained_fits": [list(map(float, fit_zd(p))) for p in trained]}


def run_experiment(name: str, seeds: int | None = None, steps: int | None = None, seed: int = 0,
                   p_naive: float | None = None, lookahead: int | None = None):
    """Dispatch a named experiment; returns ``(traces, summary)`` with traces keyed by label."""
    kw = {"seed": seed}
    if seeds is not None:
        kw["seeds"] = seeds
    if steps is not None:
        kw["steps"] = steps
    if name == "finding1":
        trace, summary = finding1(**kw)
    elif name == "finding2":
        steps = kw.pop("steps", None)
        if steps is not None:
            kw["otherplay_steps"] = max(1, steps - 700)
        trace, summary = finding2(**kw)
    elif name == "finding3":
        trace, summary = finding3(p_naive=0.75 if p_naive is None else p_naive, **kw)
    elif name in ("defect-init", "tft-init"):
        init = name.split("-")[0]
        trace, summary = finding3(p_naive=0.75 if p_naive is None else p_naive, init=init, **kw)
    elif name == "lola-sweep":
        looks = LOOKAHEADS if lookahead is None else (lookahead,)
        mixture = p_naive is not None and p_naive < 1.0
        traces, summary = lola_sweep(looks, mixture=mixture, **kw)
        return {f"lookahead{k}": t for k, t in traces.items()}, summary
    elif name == "zd-fit":
        trace, summary = zd_fit(**kw)
    else:
        raise ValueError(f"unknown analytic experiment {name!r}; expected one of {EXPERIMENTS}")
    return {name: trace}, summary


def trace_rows(traces: dict, base_seed: int = 0):
    for label, trace in traces.items():
        for row in trace.rows(base_seed):
            yield {"run": label, **row}


__all__ = ["EXPERIMENTS", "LOOKAHEADS", "evaluate_shaping", "finding1", "finding2", "finding3", "lola_run",
           "lola_sweep", "zd_fit", "run_experiment", "trace_rows", "Trace"]
