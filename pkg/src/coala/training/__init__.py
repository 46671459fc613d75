"""Population training of meta agents against naive learners and each other."""
from .config import (ALGORITHMS, ENVS, OPTIMIZERS, PRESETS, ConfigError, NaiveConfig, TrainConfig, apply_overrides,
                     preset, read_config_file, to_dict)
from .loop import TrainResult, checkpoint_pool, collect, evaluate_pool, init_pool, train
from .metrics import METRIC_KEYS, MetricsWriter, read_metrics, write_metrics
from .pool import AgentPool, Opponent, build_pool, sample_opponent
from .rollout import MetaEpisodeRecord, NumericAbort, naive_a2c_update, run_meta_episode
from .update import meta_advantages, meta_update

__all__ = ["ALGORITHMS", "ENVS", "OPTIMIZERS", "PRESETS", "ConfigError", "NaiveConfig", "TrainConfig",
           "apply_overrides", "preset", "read_config_file", "to_dict", "TrainResult", "checkpoint_pool", "collect",
           "evaluate_pool", "init_pool", "train", "METRIC_KEYS", "MetricsWriter", "read_metrics", "write_metrics",
           "AgentPool", "Opponent", "build_pool", "sample_opponent", "MetaEpisodeRecord", "NumericAbort",
           "naive_a2c_update", "run_meta_episode", "meta_advantages", "meta_update"]
