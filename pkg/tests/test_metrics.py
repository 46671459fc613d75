import io
import json
import math

import numpy as np

from coala.training.metrics import METRIC_KEYS, MetricsWriter, order_row, read_metrics, record_summary, write_metrics
from coala.training.rollout import MetaEpisodeRecord


def test_row_order_and_missing_values():
    row = order_row({"zeta": 1, "reward_meta": np.float64(0.5), "iter": np.int64(3), "apples": None,
                     "pollution": math.nan, "alpha": 2.0})
    assert list(row) == ["iter", "reward_meta", "alpha", "zeta"]
    assert isinstance(row["iter"], int) and isinstance(row["reward_meta"], float)


def test_writer_flushes_every_line(tmp_path):
    path = tmp_path / "m.jsonl"
    with MetricsWriter(path) as w:
        w.write({"iter": 0, "reward_meta": 1.0})
        assert read_metrics(path) == [{"iter": 0, "reward_meta": 1.0}]
        w.write({"iter": 1, "reward_meta": 0.5})
    assert len(read_metrics(path)) == 2


def test_stream_writer():
    buf = io.StringIO()
    write_metrics(buf, {"seed": 1, "iter": 0})
    assert json.loads(buf.getvalue()) == {"iter": 0, "seed": 1}
    assert buf.getvalue().index("iter") < buf.getvalue().index("seed")


def _record(U=2, B=2, L=4, info=None):
    z = np.zeros((U, B, L))
    return MetaEpisodeRecord(np.zeros((U, B, L, 5)), np.ones((U, B, L), dtype=int), z, z, z + 0.25,
                             np.zeros((U, B, L), dtype=int), z + 1.0, np.array(["naive"] * U), np.zeros(U, int),
                             2, np.zeros(U, int), info or {})


def test_ipd_summary():
    row = record_summary(_record(), "ipd")
    assert row == {"units": 2, "reward_meta": 0.25, "reward_opponent": 1.0, "defection_rate": 1.0,
                   "defection_rate_opponent": 0.0}


def test_cleanup_summary_discrepancy():
    U, B, L = 2, 2, 4
    cleaned = np.zeros((U, B, L, 2), dtype=bool)
    cleaned[..., 0] = True  # the meta agent always cleans
    cleaned[0, 0, :2, 1] = True
    info = {"cleaned": cleaned, "zap_attempt": np.zeros((U, B, L, 2), dtype=bool),
            "dirt": np.full((U, B, L), 2), "apples": np.ones((U, B, L))}
    row = record_summary(_record(info=info), "cleanup")
    assert row["cleaning_meta"] == 1.0 and row["cleaning_opponent"] == 2 / 16
    # three trajectories differ by 1, one by 0.5
    assert row["cleaning_discrepancy"] == (3 * 1.0 + 0.5) / 4
    assert row["pollution"] == 2.0 and row["apples"] == 1.0 and row["zap_rate_meta"] == 0.0
    assert set(row) <= set(METRIC_KEYS)
