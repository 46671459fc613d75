"""Fast oracle suites: exact enumeration, Algorithm-style return traces and gradchecks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic.game import (
    lola_dice_gradient,
    lola_objective,
    partial_gradient,
    expected_return,
    shaping_gradient,
    shaping_objective,
)
from .autodiff import tape as T
from .autodiff.gradcheck import gradcheck
from .autodiff.tape import Tape
from .estimators import batch_lambda_returns
from .oracles import MicroGame, enumerated_estimator, lookahead_gradient, unbiasedness_report
from .policy import init_params, policy_forward


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_unbiasedness(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    game = MicroGame(batch=2, episodes=2, alpha=2.0)
    rep = unbiasedness_report(rng.normal(size=game.n_params) * 0.5, game)
    ok = rep.gap("coala") < 1e-8 and rep.gap("mfos") > 1e-6 and rep.gap("batch_unaware") > 1e-6
    detail = ", ".join(f"{m} {e:.2e}" for m, e in rep.errors.items())
    return CheckResult("estimator unbiasedness", ok, detail)


def check_lookahead_equivalence() -> CheckResult:
    game = MicroGame(batch=2, episodes=2, alpha=2.0, psi0=0.3, conditioning="episode")
    theta = np.array([0.4])
    err = float(np.max(np.abs(enumerated_estimator(theta, game, "coala") - lookahead_gradient(theta, game))))
    return CheckResult("look-ahead equivalence", err < 1e-8, f"max error {err:.2e}")


def check_return_traces(seed: int = 0) -> CheckResult:
    r = np.array([[1.0, 0.0, 2.0]])
    v = np.full((1, 3), 5.0)
    a = batch_lambda_returns(r, 0.5, v, 1.0, False, False, 3)[0]
    b = batch_lambda_returns(r, 0.5, v, 0.0, False, False, 3)[0]
    ok = np.array_equal(a, [2.125, 2.25, 4.5]) and np.array_equal(b, [3.5, 2.5, 4.5])
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(1000):
        B, L = rng.integers(1, 4), rng.integers(1, 12)
        rr = rng.normal(size=(B, L))
        g = rng.uniform(0.0, 1.0)
        got = batch_lambda_returns(rr, g, np.zeros_like(rr), 1.0, False, False, int(L))
        want = np.zeros_like(rr)
        acc = np.zeros(B)
        for t in range(L - 1, -1, -1):
            acc = rr[:, t] + g * acc
            want[:, t] = acc
        worst = max(worst, float(np.max(np.abs(got - want))))
    ok = ok and worst < 1e-9
    return CheckResult("return traces", bool(ok), f"hand traces {a.tolist()} {b.tolist()}; worst {worst:.1e}")


def check_analytic_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    phi, psi = rng.normal(size=5), rng.normal(size=5)
    errs = {
        "partial": gradcheck(lambda x: expected_return(x, psi)[0], lambda x: partial_gradient(x, psi), phi),
        "shaping": gradcheck(lambda x: shaping_objective(x, psi, steps=3),
                             lambda x: shaping_gradient(x, psi, steps=3), phi),
        "lola": gradcheck(lambda x: lola_objective(x, psi, lookahead=2),
                          lambda x: lola_dice_gradient(x, psi, lookahead=2), phi),
    }
    return CheckResult("analytic gradchecks", max(errs.values()) < 1e-4,
                       ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def _policy_loss(params, obs, reset, weights):
    logits, values, _ = policy_forward(params, obs, reset)
    return T.sum_(T.log_softmax(logits, axis=-1) * weights[0]) + T.sum_(values * weights[1])


def check_policy_gradients(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    params = init_params(rng, 5, 2, 8)
    obs = rng.normal(size=(2, 4, 5))
    reset = np.zeros((2, 4), dtype=bool)
    reset[:, 0] = True
    weights = (rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 4)))
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in params.items()}
    grads = dict(zip(leaves, tape.gradients(_policy_loss(leaves, obs, reset, weights), list(leaves.values()))))
    worst = 0.0
    for name in ("W_in", "W_a", "lam", "w_v"):
        def f(x, name=name):
            return float(_policy_loss({**params, name: x}, obs, reset, weights))
        worst = max(worst, gradcheck(f, lambda x, name=name: grads[name], params[name]))
    return CheckResult("policy gradcheck", worst < 1e-4, f"max relative error {worst:.1e}")


SUITES = (check_unbiasedness, check_lookahead_equivalence, check_return_traces, check_analytic_gradients,
          check_policy_gradients)


def run_checks() -> list[CheckResult]:
    return [suite() for suite in SUITES]
