"""Closed-form iterated prisoner's dilemma: returns, shaping, LOLA and ZD fits."""
from .game import (
    DEFAULT_PAYOFFS,
    ETA_NAIVE,
    IpdPayoffs,
    expected_return,
    lola_dice_gradient,
    lola_objective,
    markov_and_s0,
    markov_from_probs,
    mixed_lola_gradient,
    naive_step,
    naive_trajectory,
    partial_gradient,
    per_step,
    probs_to_logits,
    projected_ascent_step,
    returns_from_probs,
    shaping_gradient,
    shaping_objective,
    shaping_value_and_gradient,
)
from .train import (
    LolaConfig,
    MixedGroupConfig,
    NumericAbort,
    Trace,
    lola_train,
    mixed_group_train,
    nash_probe,
    train_naive_against,
)
from .zd import fit_zd, zd_policy

__all__ = [
    "DEFAULT_PAYOFFS", "ETA_NAIVE", "IpdPayoffs", "expected_return", "lola_dice_gradient", "lola_objective",
    "markov_and_s0", "markov_from_probs", "mixed_lola_gradient", "naive_step", "naive_trajectory",
    "partial_gradient", "per_step", "probs_to_logits", "projected_ascent_step", "returns_from_probs",
    "shaping_gradient", "shaping_objective", "shaping_value_and_gradient", "LolaConfig", "MixedGroupConfig",
    "NumericAbort", "Trace", "lola_train", "mixed_group_train", "nash_probe", "train_naive_against",
    "fit_zd", "zd_policy",
]
