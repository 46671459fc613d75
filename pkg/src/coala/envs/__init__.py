"""Inner games: iterated prisoner's dilemma and CleanUp-lite."""
from .base import StepResult
from .cleanup import CleanupConfig, CleanupEnv, CleanupState, cleanup_step
from .ipd import IpdEnv, IpdState, ipd_step


def make_env(kind: str, horizon: int, **kwargs):
    if kind == "ipd":
        return IpdEnv(horizon)
    if kind == "cleanup":
        return CleanupEnv(CleanupConfig(horizon=horizon, **kwargs))
    raise ValueError(f"unknown environment {kind!r}")


def env_reset(kind: str, rng, horizon: int = 10, batch: tuple = (), **kwargs):
    return make_env(kind, horizon, **kwargs).reset(rng, batch)


__all__ = ["StepResult", "CleanupConfig", "CleanupEnv", "CleanupState", "cleanup_step", "IpdEnv", "IpdState",
           "ipd_step", "make_env", "env_reset"]
