"""End-to-end regret comparison on the synthetic time-varying objective."""

from pathlib import Path

import numpy as np
import pytest

from pb2.cli import load_config
from pb2.reporting import run_benchmark

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEEDS = 10


@pytest.fixture(scope="module")
def result():
    config = load_config(CONFIGS / "tvbench.json", ("bench.m=512",))
    return run_benchmark(config, SEEDS, ("pb2", "random"))


@pytest.mark.slow
def test_pb2_beats_random_search(result):
    assert result.summary["pb2"] <= 0.8 * result.summary["random"]


@pytest.mark.slow
def test_pb2_average_regret_shrinks(result):
    shrinking = 0
    for seed in range(SEEDS):
        cumulative = {
            row["round"]: row["R_t"] for row in result.rows if row["policy"] == "pb2" and row["seed"] == seed
        }
        if cumulative[200] / 200 <= cumulative[100] / 100:
            shrinking += 1
    assert shrinking >= 7


@pytest.mark.slow
def test_rows_cover_every_round(result):
    for policy in ("pb2", "random"):
        rounds = sorted(row["round"] for row in result.rows if row["policy"] == policy and row["seed"] == 0)
        assert rounds == list(range(1, 201))
    assert all(np.isfinite(row["R_t"]) for row in result.rows)
