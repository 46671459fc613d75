import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coala.analytic import (
    DEFAULT_PAYOFFS,
    IpdPayoffs,
    LolaConfig,
    MixedGroupConfig,
    NumericAbort,
    expected_return,
    fit_zd,
    lola_dice_gradient,
    lola_train,
    markov_and_s0,
    mixed_group_train,
    mixed_lola_gradient,
    naive_step,
    partial_gradient,
    per_step,
    probs_to_logits,
    projected_ascent_step,
    shaping_gradient,
    zd_policy,
)
from coala.analytic.game import lola_objective, shaping_objective
from coala.autodiff import gradcheck, grad_forward
from coala.analytic.train import nash_probe, train_naive_against

BIG = 40.0
seeds = st.integers(0, 2**31 - 1)


def logits(rng, n=5):
    return rng.normal(size=n)


def test_deterministic_cooperation_markov():
    m, s0 = markov_and_s0(np.full(5, BIG), np.full(5, BIG))
    np.testing.assert_allclose(m, np.outer([1, 0, 0, 0], np.ones(4)), atol=1e-12)
    np.testing.assert_allclose(s0, [1, 0, 0, 0], atol=1e-12)


def test_deterministic_defection_markov():
    m, s0 = markov_and_s0(np.full(5, -BIG), np.full(5, -BIG))
    np.testing.assert_allclose(m, np.outer([0, 0, 0, 1], np.ones(4)), atol=1e-12)
    np.testing.assert_allclose(s0, [0, 0, 0, 1], atol=1e-12)


def test_markov_columns_sum_to_one():
    rng = np.random.default_rng(0)
    m, s0 = markov_and_s0(rng.normal(size=(1000, 5)) * 3, rng.normal(size=(1000, 5)) * 3)
    np.testing.assert_allclose(m.sum(axis=-2), 1.0, atol=1e-12)
    np.testing.assert_allclose(s0.sum(axis=-1), 1.0, atol=1e-12)


def test_mirrored_states_for_agent_two():
    # agent 1 cooperates, agent 2 defects: from agent 2's view the state is DC
    p1 = np.full(5, BIG)
    p2 = np.array([-BIG, -BIG, -BIG, BIG, -BIG])  # agent 2 cooperates only in its own DC
    m, _ = markov_and_s0(p1, p2)
    # joint state CD (agent 1 C, agent 2 D) leads to mutual cooperation
    np.testing.assert_allclose(m[:, 1], [1, 0, 0, 0], atol=1e-12)


@pytest.mark.parametrize("a, b, want", [
    (BIG, BIG, (20.0, 20.0)),
    (-BIG, -BIG, (0.0, 0.0)),
    (-BIG, BIG, (40.0, -20.0)),
])
def test_expected_return_examples(a, b, want):
    j1, j2 = expected_return(np.full(5, a), np.full(5, b))
    assert (j1, j2) == pytest.approx(want, abs=1e-9)


@settings(max_examples=40)
@given(seeds)
def test_return_symmetric_under_agent_swap(seed):
    rng = np.random.default_rng(seed)
    a, b = logits(rng), logits(rng)
    j1, j2 = expected_return(a, b)
    k1, k2 = expected_return(b, a)
    assert j1 == pytest.approx(k2, abs=1e-10)
    assert j2 == pytest.approx(k1, abs=1e-10)


@settings(max_examples=40)
@given(seeds)
def test_returns_bounded(seed):
    rng = np.random.default_rng(seed)
    lo, hi = DEFAULT_PAYOFFS.return_bounds
    j1, j2 = expected_return(logits(rng) * 4, logits(rng) * 4)
    assert lo - 1e-9 <= j1 <= hi + 1e-9 and lo - 1e-9 <= j2 <= hi + 1e-9


def test_solve_succeeds_on_many_random_policies():
    rng = np.random.default_rng(1)
    j1, _ = expected_return(rng.normal(size=(10_000, 5)) * 5, rng.normal(size=(10_000, 5)) * 5)
    assert np.all(np.isfinite(j1))


def test_naive_step_identity_at_zero_rate():
    rng = np.random.default_rng(2)
    psi, phi = logits(rng), logits(rng)
    np.testing.assert_array_equal(naive_step(psi, phi, eta=0.0), psi)


def test_naive_step_uses_own_return_gradient():
    rng = np.random.default_rng(3)
    psi, phi = logits(rng), logits(rng)
    step = (naive_step(psi, phi, eta=1.0, per_step_return=False) - psi)
    err = gradcheck(lambda x: expected_return(phi, x)[1], lambda x: step, psi)
    assert err < 1e-5


def test_naive_step_against_defector_does_not_raise_dd_cooperation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        psi = logits(rng)
        new = naive_step(psi, np.full(5, -BIG))
        assert new[4] <= psi[4] + 1e-12


def test_per_step_and_raw_naive_steps_differ_by_discount_factor():
    rng = np.random.default_rng(5)
    psi, phi = logits(rng), logits(rng)
    raw = naive_step(psi, phi, eta=1.0, per_step_return=False) - psi
    scaled = naive_step(psi, phi, eta=1.0) - psi
    np.testing.assert_allclose(scaled, raw * (1 - DEFAULT_PAYOFFS.gamma), rtol=1e-12)


def test_shaping_gradient_without_naive_steps_is_partial():
    rng = np.random.default_rng(6)
    phi, psi = logits(rng), logits(rng)
    np.testing.assert_allclose(shaping_gradient(phi, psi, steps=0), partial_gradient(phi, psi), rtol=1e-12)


@pytest.mark.parametrize("steps", [1, 3, 5])
def test_shaping_gradient_matches_finite_differences(steps):
    rng = np.random.default_rng(steps)
    phi, psi = logits(rng), logits(rng)
    err = gradcheck(lambda x: shaping_objective(x, psi, steps=steps), lambda x: shaping_gradient(x, psi, steps=steps),
                    phi)
    assert err < 1e-4


@pytest.mark.parametrize("lookahead", [1, 2, 3])
def test_lola_gradient_matches_finite_differences(lookahead):
    rng = np.random.default_rng(10 + lookahead)
    phi, psi = logits(rng), logits(rng)
    err = gradcheck(lambda x: lola_objective(x, psi, lookahead=lookahead, alpha=5.0),
                    lambda x: lola_dice_gradient(x, psi, lookahead=lookahead, alpha=5.0), phi)
    assert err < 1e-4


def test_lola_with_zero_rate_is_partial():
    rng = np.random.default_rng(7)
    phi, psi = logits(rng), logits(rng)
    np.testing.assert_allclose(lola_dice_gradient(phi, psi, lookahead=2, alpha=0.0), partial_gradient(phi, psi),
                               rtol=1e-12)


def test_lola_one_step_consistent_with_shaping_sum():
    # the one-step shaping sum is J(phi, psi) + J(phi, psi + step), so its gradient
    # minus the partial term equals the one-step look-ahead gradient
    rng = np.random.default_rng(8)
    phi, psi = logits(rng), logits(rng)
    shaped = shaping_gradient(phi, psi, steps=1, eta_naive=5.0)
    np.testing.assert_allclose(shaped - partial_gradient(phi, psi), lola_dice_gradient(phi, psi, lookahead=1, alpha=5.0),
                               rtol=1e-10, atol=1e-12)


def test_mixture_endpoint_is_pure_lola():
    rng = np.random.default_rng(9)
    phi, psi = logits(rng), logits(rng)
    np.testing.assert_allclose(mixed_lola_gradient(phi, psi, lookahead=2, p_naive=1.0),
                               lola_dice_gradient(phi, psi, lookahead=2), rtol=1e-12)
    mix = mixed_lola_gradient(phi, psi, lookahead=2, p_naive=0.4)
    want = 0.4 * lola_dice_gradient(phi, psi, lookahead=2) + 0.6 * partial_gradient(phi, psi)
    np.testing.assert_allclose(mix, want, rtol=1e-12)


def test_zd_recovers_tit_for_tat():
    np.testing.assert_allclose(zd_policy(1.0, 1.0 / 3.0), [1, 0, 1, 0], atol=1e-12)


def test_zd_substitution_example():
    np.testing.assert_allclose(zd_policy(2.0, 0.1), [0.9, 0.5, 0.4, 0.0], atol=1e-12)


@given(st.floats(1.0, 10.0), st.floats(0.01, 1.0))
def test_zd_defect_state_never_cooperates(chi, frac):
    from coala.analytic.zd import phi_upper
    assert zd_policy(chi, frac * phi_upper(chi))[3] == 0.0


def test_zd_rejects_infeasible_parameters():
    with pytest.raises(ValueError):
        zd_policy(0.5, 0.1)
    with pytest.raises(ValueError):
        zd_policy(2.0, 0.9)


def test_fit_exact_tit_for_tat():
    chi, phi, loss = fit_zd(np.array([1.0, 0.0, 1.0, 0.0]))
    assert loss < 1e-10 and chi == pytest.approx(1.0, abs=1e-3)


def test_fit_round_trip():
    chi, phi, loss = fit_zd(zd_policy(2.0, 0.1))
    assert chi == pytest.approx(2.0, abs=1e-3) and phi == pytest.approx(0.1, abs=1e-3) and loss < 1e-8


def test_projected_ascent_examples():
    p = np.array([0.2, 0.5, 0.0, 1.0, 0.3])
    np.testing.assert_array_equal(projected_ascent_step(p, np.zeros(5), 1.0), p)
    out = projected_ascent_step(np.zeros(5), -np.ones(5), 1.0)
    np.testing.assert_array_equal(out, 0.0)


def test_mutual_defection_gradient_only_in_dc_state():
    d = np.zeros(5)
    step = nash_probe(d, d, p_naive=1.0, metabatch=4, rng=np.random.default_rng(0))
    assert np.all(step[[0, 1, 2, 4]] == 0.0)
    assert step[3] > 0.0


def test_pure_partial_learning_at_mutual_defection_is_stationary():
    d = np.zeros(5)
    step = nash_probe(d, d, p_naive=0.0)
    assert np.all(step == 0.0)


def test_mixed_group_abort_on_non_finite():
    cfg = MixedGroupConfig(p_naive=1.0, agents=1, seeds=1, steps=2, metabatch=1, eta_meta=np.inf)
    with pytest.raises(NumericAbort):
        mixed_group_train(cfg, "random")


def test_mixed_group_trace_shapes_and_determinism():
    cfg = MixedGroupConfig(p_naive=0.5, seeds=2, steps=4, metabatch=2, naive_steps=2, log_every=2)
    a = mixed_group_train(cfg)
    b = mixed_group_train(cfg)
    assert a.steps == [0, 2, 4]
    assert np.asarray(a.params).shape == (3, 2, 2, 5)
    np.testing.assert_array_equal(np.asarray(a.params), np.asarray(b.params))
    rows = list(a.rows())
    assert len(rows) == 3 * 2 * 2 and set(rows[0]) >= {"step", "seed", "shaping_reward", "otherplay_reward", "params"}


def test_seed_results_do_not_depend_on_seed_count():
    small = mixed_group_train(MixedGroupConfig(seeds=2, steps=3, metabatch=2, naive_steps=2))
    big = mixed_group_train(MixedGroupConfig(seeds=3, steps=3, metabatch=2, naive_steps=2))
    np.testing.assert_array_equal(small.final("params"), big.final("params")[:2])


def test_switch_moves_to_other_play_only():
    cfg = MixedGroupConfig(p_naive=1.0, switch_step=2, p_naive_after=0.0)
    assert cfg.p_naive_at(1) == 1.0 and cfg.p_naive_at(2) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        MixedGroupConfig(p_naive=1.5)
    with pytest.raises(ValueError):
        MixedGroupConfig(naive_objective="other")


def test_lola_pair_training_runs():
    trace = lola_train(LolaConfig(lookahead=1, seeds=2, steps=3, log_every=1))
    assert len(trace.steps) == 4 and np.all(np.isfinite(trace.final("otherplay_reward")))


def test_naive_learner_against_cooperator_learns_to_defect():
    fixed, naive = train_naive_against(np.full(5, 3.0), np.zeros(5), steps=100)
    assert naive[-1] > naive[0]


def test_payoff_validation_and_swap():
    with pytest.raises(ValueError):
        IpdPayoffs(gamma=1.0)
    sw = DEFAULT_PAYOFFS.swapped()
    assert sw.r1 == DEFAULT_PAYOFFS.r1 and sw.r2 == DEFAULT_PAYOFFS.r2


def test_per_step_normalization():
    assert per_step(20.0) == pytest.approx(1.0)
    assert probs_to_logits(0.5) == 0.0
    assert grad_forward(lambda x: x[..., 0], np.array([1.0])) == pytest.approx([1.0])
