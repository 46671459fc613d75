"""Acceptance criteria, one test per criterion.

Long experiments are cached under ``.acceptance-cache/`` keyed on their
arguments and a hash of the package sources, so a rerun after a source change
recomputes everything while an unchanged tree reuses the stored summaries.
Set ``COALA_ACCEPTANCE_FRESH=1`` to ignore the cache.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

import coala
from coala.analytic import experiments as ax
from coala.analytic.game import (
    expected_return,
    lola_dice_gradient,
    lola_objective,
    partial_gradient,
    shaping_gradient,
    shaping_objective,
)
from coala.autodiff import tape as T
from coala.autodiff.gradcheck import gradcheck
from coala.autodiff.tape import Tape
from coala.cli import run_command
from coala.envs import CleanupConfig, CleanupEnv, CleanupState
from coala.envs.cleanup import NOOP, ZAP
from coala.estimators import MODES, batch_lambda_returns
from coala.oracles import MicroGame, enumerated_estimator, lookahead_gradient, unbiasedness_report
from coala.policy import init_params, policy_forward
from coala.training import apply_overrides, evaluate_pool, preset, train
from coala.training.diagnostics import BalanceConfig, balance_sweep

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("COALA_ACCEPTANCE_CACHE", ROOT / ".acceptance-cache"))
FRESH = os.environ.get("COALA_ACCEPTANCE_FRESH") == "1"


def _source_hash() -> str:
    h = hashlib.sha256()
    src = Path(coala.__file__).parent
    for path in sorted(src.rglob("*.py")):
        h.update(str(path.relative_to(src)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


SOURCE_HASH = _source_hash()


def cached(name: str, fn, **kwargs):
    """``fn(**kwargs)`` memoized on disk; results must be JSON-serializable."""
    key = hashlib.sha256(json.dumps([name, kwargs, SOURCE_HASH], sort_keys=True).encode()).hexdigest()[:20]
    path = CACHE / f"{name}-{key}.json"
    if path.exists() and not FRESH:
        return json.loads(path.read_text())
    out = fn(**kwargs)
    CACHE.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(out, sort_keys=True))
    tmp.replace(path)
    return out


def verdict(report, number: int, ok: bool, detail: str):
    report(number, ok, detail)
    assert ok, detail


# 1, 2: exact enumeration on the micro game

def test_criterion_01_estimator_unbiasedness(acceptance):
    game = MicroGame(batch=2, episodes=2, alpha=2.0)
    gaps = []
    for seed in range(5):
        rep = unbiasedness_report(np.random.default_rng(seed).normal(size=game.n_params) * 0.5, game)
        gaps.append(rep.errors)
    worst = {m: max(g[m] for g in gaps) for m in MODES}
    least = {m: min(g[m] for g in gaps) for m in MODES}
    ok = worst["coala"] < 1e-8 and least["mfos"] > 0.0 and least["batch_unaware"] > 0.0
    verdict(acceptance, 1, ok, f"coala max gap {worst['coala']:.1e}; mfos min gap {least['mfos']:.2e}; "
                               f"batch_unaware min gap {least['batch_unaware']:.2e}")


def test_criterion_02_lookahead_equivalence(acceptance):
    worst = 0.0
    for theta, psi0 in [(0.4, 0.3), (-1.0, 0.0), (2.0, -0.5), (0.0, 1.0)]:
        game = MicroGame(batch=2, episodes=2, alpha=2.0, psi0=psi0, conditioning="episode")
        t = np.array([theta])
        worst = max(worst, float(np.max(np.abs(enumerated_estimator(t, game, "coala") - lookahead_gradient(t, game)))))
    verdict(acceptance, 2, worst < 1e-8, f"max |enumerated - nested total derivative| {worst:.1e}")


# 3: return recursion traces

def test_criterion_03_return_traces(acceptance):
    r, v = np.array([[1.0, 0.0, 2.0]]), np.full((1, 3), 5.0)
    a = batch_lambda_returns(r, 0.5, v, 1.0, False, False, 3)[0]
    b = batch_lambda_returns(r, 0.5, v, 0.0, False, False, 3)[0]
    hand = np.array_equal(a, [2.125, 2.25, 4.5]) and np.array_equal(b, [3.5, 2.5, 4.5])
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        B, T_, M = (int(x) for x in rng.integers(1, 5, size=3))
        L = T_ * M
        rr = rng.normal(size=(B, L))
        g = float(rng.uniform())
        got = batch_lambda_returns(rr, g, np.zeros_like(rr), 1.0, False, False, T_)
        want = np.zeros_like(rr)
        acc = np.zeros(B)
        for t in range(L - 1, -1, -1):
            acc = rr[:, t] + g * acc
            want[:, t] = acc
        worst = max(worst, float(np.max(np.abs(got - want))))
    verdict(acceptance, 3, hand and worst < 1e-9,
            f"traces {a.tolist()} and {b.tolist()}; flags-off worst error {worst:.1e}")


# 4: gradient checks

def _policy_loss(params, obs, reset, weights):
    logits, values, _ = policy_forward(params, obs, reset)
    return T.sum_(T.log_softmax(logits, axis=-1) * weights[0]) + T.sum_(values * weights[1])


def test_criterion_04_gradchecks(acceptance):
    rng = np.random.default_rng(0)
    errs = {"partial": 0.0, "shaping": 0.0, "lola": 0.0, "bptt": 0.0}
    for _ in range(3):
        phi, psi = rng.normal(size=5), rng.normal(size=5)
        errs["partial"] = max(errs["partial"], gradcheck(lambda x: expected_return(x, psi)[0],
                                                         lambda x: partial_gradient(x, psi), phi))
        for m in (1, 3, 5):
            errs["shaping"] = max(errs["shaping"], gradcheck(lambda x: shaping_objective(x, psi, steps=m),
                                                             lambda x: shaping_gradient(x, psi, steps=m), phi))
        for k in (1, 2, 3):
            errs["lola"] = max(errs["lola"], gradcheck(lambda x: lola_objective(x, psi, lookahead=k),
                                                       lambda x: lola_dice_gradient(x, psi, lookahead=k), phi))
    for seed in range(3):
        r = np.random.default_rng(seed)
        params = init_params(r, 5, 2, 8)
        params = {k: v + 0.3 * r.normal(size=np.shape(v)) if k != "lam" else v for k, v in params.items()}
        obs = r.normal(size=(2, 4, 5))
        reset = np.zeros((2, 4), dtype=bool)
        reset[:, 0] = True
        weights = (r.normal(size=(2, 4, 2)), r.normal(size=(2, 4)))
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in params.items()}
        grads = dict(zip(leaves, tape.gradients(_policy_loss(leaves, obs, reset, weights), list(leaves.values()))))
        for name in params:
            def f(x, name=name):
                return _policy_loss({**params, name: x}, obs, reset, weights)
            errs["bptt"] = max(errs["bptt"], gradcheck(f, lambda x, name=name: grads[name], params[name]))
    ok = max(errs.values()) < 1e-4
    verdict(acceptance, 4, ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


# 5-9: analytic IPD experiments

def _finding1(seeds, steps):
    _, summary = ax.finding1(seeds=seeds, steps=steps)
    return summary


def _finding2(seeds):
    _, summary = ax.finding2(seeds=seeds)
    return summary


def _finding3(p_naive, seeds, steps):
    _, summary = ax.finding3(p_naive=p_naive, seeds=seeds, steps=steps)
    return summary


def _lola(seeds, steps, mixture):
    _, summary = ax.lola_sweep((1, 20), seeds=seeds, steps=steps, mixture=mixture)
    summary["otherplay_median"] = {str(k): v for k, v in summary["otherplay_median"].items()}
    return summary


def _zd(seeds, steps):
    _, summary = ax.zd_fit(seeds=seeds, steps=steps)
    return summary


@pytest.mark.slow
def test_criterion_05_extortion_of_naive_learners(acceptance):
    s = cached("finding1", _finding1, seeds=32, steps=1000)
    frac = s["fraction_extorting"]
    verdict(acceptance, 5, frac >= 0.75,
            f"{frac:.0%} of 32 seeds with shaping reward > 1 and naive reward > 0 "
            f"(median shaping {np.median(s['shaping_reward']):.3f}, naive {np.median(s['naive_reward']):.3f})")


@pytest.mark.slow
def test_criterion_06_extortioners_turn_cooperative(acceptance):
    s = cached("finding2", _finding2, seeds=8)
    final = s["otherplay_final"]
    ok = all(0.8 <= x <= 1.1 for x in final)
    verdict(acceptance, 6, ok, f"median other-play after switch {np.round(final, 3).tolist()} "
                               f"(at switch {np.round(s['otherplay_at_switch'], 3).tolist()})")


@pytest.mark.slow
def test_criterion_07_mixed_group_cooperation(acceptance):
    mixed = cached("finding3", _finding3, p_naive=0.75, seeds=8, steps=1000)
    pure = cached("finding3", _finding3, p_naive=0.0, seeds=8, steps=1000)
    ok = mixed["otherplay_final_median"] >= 0.8 and pure["otherplay_final_median"] <= 0.2
    verdict(acceptance, 7, ok, f"median other-play p_naive=0.75: {mixed['otherplay_final_median']:.3f} "
                               f"(need >= 0.8); p_naive=0: {pure['otherplay_final_median']:.3f} (need <= 0.2)")


@pytest.mark.slow
def test_criterion_08_lola_sweep(acceptance):
    plain = cached("lola", _lola, seeds=8, steps=1000, mixture=False)
    mixed = cached("lola", _lola, seeds=8, steps=1000, mixture=True)
    one, twenty = plain["otherplay_median"]["1"], plain["otherplay_median"]["20"]
    twenty_mixed = mixed["otherplay_median"]["20"]
    extort = plain["probe_naive_reward"] < plain["probe_lola_reward"]
    ok = one >= 0.8 and twenty <= 0.5 and extort and twenty_mixed >= 0.8
    verdict(acceptance, 8, ok, f"other-play 1 look-ahead {one:.3f}, 20 look-aheads {twenty:.3f}, "
                               f"20 with mixture {twenty_mixed:.3f}; probe naive {plain['probe_naive_reward']:.3f} "
                               f"vs LOLA {plain['probe_lola_reward']:.3f}")


@pytest.mark.slow
def test_criterion_09_zd_fit(acceptance):
    s = cached("zd", _zd, seeds=16, steps=1000)
    t, r = s["trained_median_loss"], s["random_median_loss"]
    verdict(acceptance, 9, t * 10 <= r, f"median fit loss trained {t:.2e} vs random {r:.2e} (ratio {r / t:.0f}x)")


# 10: gradient balance

def test_criterion_10_gradient_balance(acceptance):
    sizes = (1, 16)
    ratios = balance_sweep(sizes, cfg=BalanceConfig(units=2048))
    coala_ok = all(0.1 <= x <= 10 for x in ratios["coala"])
    shrink = {m: ratios[m][0] / ratios[m][-1] for m in ("mfos", "batch_unaware")}
    B = sizes[-1]
    shrink_ok = all(B / 3 <= x <= 3 * B for x in shrink.values())
    detail = (f"coala ratios {np.round(ratios['coala'], 3).tolist()}; shrink factor B=1->16 "
              + ", ".join(f"{m} {x:.1f}" for m, x in shrink.items()) + f" (need [{B / 3:.1f}, {3 * B}])")
    verdict(acceptance, 10, coala_ok and shrink_ok, detail)


# 11: RL ordering at desk scale

RL_SIZES = {"meta_batch": 32, "iterations": 1000, "batch_size": 8, "inner_episodes": 8, "inner_length": 5,
            "width": 16, "chunk_size": 32, "ppo_minibatches": 2, "naive.lr": 0.05}
RL_SEEDS = (0, 1, 2)


def _rl_run(setting, estimator, seed):
    cfg = preset(setting)
    extra = {"meta_population": 2, "naive_population": 10} if setting == "ipd_mixed" else {}
    cfg = apply_overrides(cfg, {**RL_SIZES, **extra, "estimator": estimator, "seed": seed}).validate()
    result = train(cfg)
    kind = "naive" if setting == "ipd_shaping" else "meta"
    rows = evaluate_pool(result.pool, cfg, matchups=(kind,), episodes=64, iteration=cfg.iterations)
    tail = [r["reward_meta"] for r in result.rows[-50:] if r["opponent_kind"] == kind]
    return {"eval_reward": rows[0]["reward_meta"], "train_tail_reward": float(np.mean(tail))}


def _rl_table():
    table = {}
    for setting in ("ipd_shaping", "ipd_mixed"):
        for est in MODES:
            runs = [cached("rl", _rl_run, setting=setting, estimator=est, seed=s) for s in RL_SEEDS]
            table[setting, est] = float(np.mean([r["eval_reward"] for r in runs]))
    return table


@pytest.mark.slow
def test_criterion_11_rl_ordering(acceptance):
    t = _rl_table()
    ok = all(t[s, "coala"] > t[s, m] for s in ("ipd_shaping", "ipd_mixed") for m in ("mfos", "batch_unaware"))
    detail = "; ".join(f"{s}: " + ", ".join(f"{m} {t[s, m]:.3f}" for m in MODES)
                       for s in ("ipd_shaping", "ipd_mixed"))
    verdict(acceptance, 11, ok, detail + " (mean per-step reward over 3 seeds)")


# 12: CleanUp-lite substitutes

def _cleanup_state(grid, pos, timer):
    return CleanupState(np.asarray(grid), np.asarray(pos), np.asarray(timer), 0)


def _cleanup_properties() -> dict:
    n = 100_000
    env = CleanupEnv(CleanupConfig(initial_dirt=0))
    empty = _cleanup_state(np.zeros((n, 5, 4), dtype=np.int64), np.zeros((n, 2, 2), dtype=np.int64),
                           np.zeros((n, 2), dtype=np.int64))
    _, res = env.step(empty, np.full((n, 2), NOOP), np.random.default_rng(1))
    spawn_err = [abs(res.info["dirt_spawned"].mean() - env.cfg.p_pollution)]
    for dirt in (0, 1, 2, 3):
        grid = np.zeros((n, 5, 4), dtype=np.int64)
        grid[:, :dirt, 3] = 2
        env_d = CleanupEnv(CleanupConfig(p_pollution=0.0))
        _, res = env_d.step(_cleanup_state(grid, np.full((n, 2, 2), 2), np.zeros((n, 2), dtype=np.int64)),
                            np.full((n, 2), NOOP), np.random.default_rng(dirt + 2))
        spawn_err.append(abs(res.info["apple_spawned"].mean() - (1 - min(1.0, dirt / 3))))
    # zap freeze
    env_z = CleanupEnv(CleanupConfig(p_zap=1.0, p_pollution=0.0, initial_dirt=0))
    rng = np.random.default_rng(0)
    state = _cleanup_state(np.zeros((5, 4), dtype=np.int64), [[1, 1], [1, 0]], [0, 0])
    state, _ = env_z.step(state, np.array([ZAP, NOOP]), rng)
    frozen, positions = 0, []
    while state.timer[1] > 0:
        state, _ = env_z.step(state, np.array([NOOP, 3]), rng)
        frozen += 1
        positions.append(state.pos[1].tolist())
    # conservation and reproducibility on random play
    def play(seed):
        e = CleanupEnv()
        r = np.random.default_rng(seed)
        s, _ = e.reset(r, (32,))
        out = []
        for _ in range(64):
            s, res = e.step(s, r.integers(0, 6, size=(32, 2)), r)
            out.append((s.grid.copy(), res.rewards.copy(), res.info["harvested"].copy()))
        return out
    a, b = play(7), play(7)
    conserved = all(np.array_equal(rw, hv.astype(float)) for _, rw, hv in a)
    same = all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    return {"spawn_err": float(max(spawn_err)), "frozen_steps": frozen, "stayed": len({tuple(p) for p in positions}),
            "conserved": conserved, "reproducible": same}


def _cleanup_smoke(iterations):
    cfg = apply_overrides(preset("cleanup_shaping"), {
        "iterations": iterations, "meta_batch": 8, "batch_size": 4, "inner_episodes": 3, "inner_length": 16,
        "width": 16, "chunk_size": 8, "ppo_epochs": 1}).validate()
    rows = train(cfg).rows
    numeric = [v for r in rows for v in r.values() if isinstance(v, float)]
    eaten = sum((r["reward_meta"] + r["reward_opponent"]) * r["units"] for r in rows)
    return {"iterations": len({r["iter"] for r in rows}), "finite": bool(np.all(np.isfinite(numeric))),
            "apples_eaten_per_step": float(eaten)}


@pytest.mark.slow
def test_criterion_12_cleanup_substitutes(acceptance):
    p = _cleanup_properties()
    smoke = cached("cleanup_smoke", _cleanup_smoke, iterations=50)
    ok = (p["spawn_err"] <= 0.01 and p["frozen_steps"] == 5 and p["stayed"] == 1 and p["conserved"]
          and p["reproducible"] and smoke["iterations"] == 50 and smoke["finite"] and smoke["apples_eaten_per_step"] > 0)
    verdict(acceptance, 12, ok, f"spawn error {p['spawn_err']:.4f}, freeze {p['frozen_steps']} steps, "
                                f"conservation {p['conserved']}, reproducible {p['reproducible']}; smoke "
                                f"{smoke['iterations']} iterations, finite {smoke['finite']}, "
                                f"apples eaten {smoke['apples_eaten_per_step']:.2f}")


# 13: determinism

TINY = ["--set", "meta_batch=6", "--set", "batch_size=2", "--set", "inner_episodes=3", "--set", "inner_length=3",
        "--set", "width=8", "--set", "chunk_size=2", "--set", "ppo_minibatches=2"]


def test_criterion_13_determinism(acceptance, tmp_path):
    digests = {}
    for label, extra in (("a", ["--workers", "1"]), ("b", ["--workers", "1"]), ("c", ["--workers", "3"])):
        out = tmp_path / f"train_{label}"
        rc = run_command(["train", "--experiment", "ipd_mixed", "--iterations", "3", "--seed", "5", "--out", str(out),
                          *TINY, "--set", "meta_population=2", *extra])
        assert rc == 0
        digests[f"train_{label}"] = hashlib.sha256((out / "metrics.jsonl").read_bytes()).hexdigest()
    for label in ("a", "b"):
        out = tmp_path / f"analytic_{label}"
        assert run_command(["analytic", "finding3", "--seeds", "3", "--steps", "20", "--seed", "5",
                            "--out", str(out)]) == 0
        digests[f"analytic_{label}"] = hashlib.sha256((out / "metrics.jsonl").read_bytes()).hexdigest()
    same_train = len({digests["train_a"], digests["train_b"], digests["train_c"]}) == 1
    same_analytic = digests["analytic_a"] == digests["analytic_b"]
    verdict(acceptance, 13, same_train and same_analytic,
            f"train metrics identical across repeats and worker counts: {same_train}; "
            f"analytic metrics identical: {same_analytic}")
