"""Training configuration, presets and the hierarchical key=value loader."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

from ..estimators import MODES

ENVS = ("ipd", "cleanup")
ALGORITHMS = ("ppo", "a2c")
OPTIMIZERS = ("adam", "sgd")


class ConfigError(ValueError):
    """A configuration key is unknown, mistyped or out of range."""


@dataclass(frozen=True)
class NaiveConfig:
    """A2C settings for naive learners updating at inner-episode boundaries."""

    lr: float = 0.005
    optimizer: str = "adam"
    adam_eps: float = 1e-5
    gamma: float = 0.99
    reward_rescaling: float = 0.05
    advantage_normalization: bool = True
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 1.0

    def validate(self, prefix: str = "naive"):
        _check(self.lr >= 0, f"{prefix}.lr", "must be non-negative")
        _check(self.optimizer in OPTIMIZERS, f"{prefix}.optimizer", f"must be one of {OPTIMIZERS}")
        _check(0.0 < self.gamma <= 1.0, f"{prefix}.gamma", "must lie in (0, 1]")
        _check(self.reward_rescaling > 0, f"{prefix}.reward_rescaling", "must be positive")
        _check(self.max_grad_norm > 0, f"{prefix}.max_grad_norm", "must be positive")


@dataclass(frozen=True)
class TrainConfig:
    env: str = "ipd"
    iterations: int = 3000
    meta_batch: int = 128
    batch_size: int = 16
    inner_episodes: int = 20
    inner_length: int = 10
    p_naive: float = 1.0
    meta_population: int = 1
    naive_population: int = 10
    dynamic_naive: bool = False
    estimator: str = "coala"
    algorithm: str = "ppo"
    optimizer: str = "adam"
    lr: float = 3e-4
    adam_eps: float = 1e-5
    max_grad_norm: float = 1.0
    ppo_epochs: int = 4
    ppo_minibatches: int = 2
    clip_eps: float = 0.2
    value_coef: float = 0.5
    clip_value: bool = True
    entropy_coef: float = 0.0
    advantage_normalization: bool = False
    reward_rescaling: float = 0.05
    gamma: float = 1.0
    lambda_td: float = 1.0
    lambda_gae: float = 1.0
    width: int = 32
    chunk_size: int = 8
    workers: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    diagnostics_every: int = 0
    naive: NaiveConfig = field(default_factory=NaiveConfig)

    def validate(self) -> "TrainConfig":
        _check(self.env in ENVS, "env", f"must be one of {ENVS}")
        for name in ("iterations", "meta_batch", "batch_size", "inner_episodes", "inner_length",
                     "meta_population", "naive_population", "width", "chunk_size", "workers",
                     "ppo_epochs", "ppo_minibatches"):
            _check(getattr(self, name) >= 1, name, "must be at least 1")
        _check(0.0 <= self.p_naive <= 1.0, "p_naive", "must lie in [0, 1]")
        _check(self.p_naive == 1.0 or self.meta_population >= 2, "meta_population",
               "needs at least 2 agents when meta opponents can be drawn")
        _check(self.estimator in MODES, "estimator", f"must be one of {MODES}")
        _check(self.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}")
        _check(self.optimizer in OPTIMIZERS, "optimizer", f"must be one of {OPTIMIZERS}")
        _check(self.lr >= 0, "lr", "must be non-negative")
        _check(self.reward_rescaling > 0, "reward_rescaling", "must be positive")
        _check(0.0 < self.gamma <= 1.0, "gamma", "must lie in (0, 1]")
        for name in ("lambda_td", "lambda_gae"):
            _check(0.0 <= getattr(self, name) <= 1.0, name, "must lie in [0, 1]")
        _check(self.ppo_minibatches <= self.meta_batch, "ppo_minibatches", "cannot exceed meta_batch")
        _check(self.checkpoint_every >= 0 and self.diagnostics_every >= 0, "checkpoint_every",
               "must be non-negative")
        self.naive.validate()
        return self

    @property
    def seq_len(self) -> int:
        return self.inner_episodes * self.inner_length

    def fingerprint(self) -> str:
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _check(ok: bool, key: str, message: str):
    if not ok:
        raise ConfigError(f"{key}: {message}")


PRESETS = {
    "ipd_shaping": {},
    "ipd_mixed": {"p_naive": 0.75, "meta_population": 4, "naive_population": 10},
    "cleanup_shaping": {
        "env": "cleanup", "meta_batch": 512, "batch_size": 32, "inner_episodes": 100, "inner_length": 64,
        "lr": 1e-3, "advantage_normalization": True, "reward_rescaling": 0.1,
        "naive.reward_rescaling": 0.1,
    },
    "cleanup_mixed": {
        "env": "cleanup", "iterations": 30000, "meta_batch": 512, "batch_size": 64, "inner_episodes": 5,
        "inner_length": 64, "p_naive": 0.75, "meta_population": 3, "naive_population": 3,
        "dynamic_naive": True, "algorithm": "a2c", "optimizer": "sgd", "lr": 0.1,
        "advantage_normalization": True, "reward_rescaling": 0.1,
        "naive.optimizer": "sgd", "naive.lr": 1.0, "naive.gamma": 1.0, "naive.reward_rescaling": 0.1,
    },
}


def to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


def _coerce(raw, current, key: str):
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if value != int(value):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(value)
    if isinstance(current, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return str(raw).strip()


def apply_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply dotted ``key -> value`` pairs; ``naive.lr`` addresses the nested block."""
    top, nested = {}, {}
    known = {f.name: f for f in fields(cfg)}
    naive_known = {f.name for f in fields(NaiveConfig)}
    for key, raw in overrides.items():
        if key.startswith("naive."):
            sub = key.split(".", 1)[1]
            if sub not in naive_known:
                raise ConfigError(f"{key}: unknown key")
            nested[sub] = _coerce(raw, getattr(cfg.naive, sub), key)
        elif key in known and key != "naive":
            top[key] = _coerce(raw, getattr(cfg, key), key)
        else:
            raise ConfigError(f"{key}: unknown key")
    naive = dataclasses.replace(cfg.naive, **nested)
    return dataclasses.replace(cfg, naive=naive, **top)


def preset(name: str, desk_scale: bool = False) -> TrainConfig:
    """Table defaults for a named experiment; ``desk_scale`` halves meta_batch and iterations."""
    if name not in PRESETS:
        raise ConfigError(f"experiment: unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    cfg = apply_overrides(TrainConfig(), PRESETS[name])
    if desk_scale:
        cfg = dataclasses.replace(cfg, meta_batch=max(1, cfg.meta_batch // 2),
                                  iterations=max(1, cfg.iterations // 2))
    return cfg.validate()


def read_config_file(path) -> tuple[str | None, dict]:
    """Parse an INI-style file into ``(experiment, flat overrides)``.

    Keys in ``[train]`` (or ``[run]``) are top-level; keys in ``[naive]`` are
    prefixed ``naive.``.  ``experiment`` in ``[run]`` names a preset.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    experiment = None
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if section == "run" and key == "experiment":
                experiment = value.strip()
            elif section in ("run", "train"):
                flat[key] = value
            elif section == "naive":
                flat[f"naive.{key}"] = value
            else:
                raise ConfigError(f"{section}.{key}: unknown section")
    return experiment, flat
