"""Per-iteration metric rows and a line-oriented JSON writer."""
from __future__ import annotations

import json

import numpy as np

from .rollout import MetaEpisodeRecord

# column order of a metrics row; absent optional values are omitted, never null
METRIC_KEYS = ("iter", "seed", "phase", "opponent_kind", "units", "reward_meta", "reward_opponent",
               "defection_rate", "defection_rate_opponent", "cleaning_meta", "cleaning_opponent",
               "cleaning_discrepancy", "zap_rate_meta", "zap_rate_opponent", "pollution", "apples",
               "grad_ratio")


def _clean(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _present(value) -> bool:
    if value is None:
        return False
    return not (isinstance(value, (float, np.floating)) and np.isnan(value))


def order_row(row: dict) -> dict:
    """Known keys first in schema order, then any extras sorted; missing and NaN values dropped."""
    out = {k: _clean(row[k]) for k in METRIC_KEYS if k in row and _present(row[k])}
    for k in sorted(set(row) - set(METRIC_KEYS)):
        if _present(row[k]):
            out[k] = _clean(row[k])
    return out


class MetricsWriter:
    """Append-only JSONL writer; one object per line, flushed after every write."""

    def __init__(self, path, mode: str = "w"):
        self.path = path
        self._fh = open(path, mode)

    def write(self, row: dict) -> None:
        self._fh.write(json.dumps(order_row(row)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_metrics(stream, row: dict) -> None:
    """Write one row to an open text stream."""
    stream.write(json.dumps(order_row(row)) + "\n")
    stream.flush()


def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def record_summary(record: MetaEpisodeRecord, env_kind: str) -> dict:
    """Per-step averages over every trajectory in ``record``."""
    row = {
        "units": int(record.units),
        "reward_meta": float(record.rewards.mean()),
        "reward_opponent": float(record.opp_rewards.mean()),
    }
    if env_kind == "ipd":
        row["defection_rate"] = float(np.mean(record.actions == 1))
        row["defection_rate_opponent"] = float(np.mean(record.opp_actions == 1))
    else:
        info = record.info
        cleaned = info["cleaned"].mean(axis=(0, 1, 2))
        zaps = info["zap_attempt"].mean(axis=(0, 1, 2))
        # per trajectory: |cleaning rate of meta - cleaning rate of opponent|
        per_traj = info["cleaned"].mean(axis=2)
        row.update({
            "cleaning_meta": float(cleaned[0]),
            "cleaning_opponent": float(cleaned[1]),
            "cleaning_discrepancy": float(np.abs(per_traj[..., 0] - per_traj[..., 1]).mean()),
            "zap_rate_meta": float(zaps[0]),
            "zap_rate_opponent": float(zaps[1]),
            "pollution": float(info["dirt"].mean()),
            "apples": float(info["apples"].mean()),
        })
    return row


def summarize_by_kind(records, env_kind: str) -> dict:
    """Merge records by opponent kind and summarize each group."""
    merged = MetaEpisodeRecord.concatenate(records)
    out = {}
    for kind in ("naive", "meta"):
        sel = np.flatnonzero(merged.opponent_kind == kind)
        if sel.size:
            out[kind] = record_summary(merged.select(sel), env_kind)
    return out
