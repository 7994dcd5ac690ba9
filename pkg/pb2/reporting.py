"""Log summaries and benchmark sweeps shared by the CLI and the report service."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from pb2.benchfn import QuadraticTrainer, TvBenchTrainer, cumulative_regret, sample_tv_function
from pb2.models.trainer import Trainer
from pb2.schedulers import run_schedule
from pb2.schemas.report import AgentReport, LogReport
from pb2.schemas.run import RunConfig
from pb2.schemas.trial import TrialRecord

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("round", "policy", "seed", "r_t", "R_t", "best_F")
SUMMARY_COLUMNS = ("policy", "seeds", "median_R_T")


def summarize_log(records: Sequence[TrialRecord]) -> LogReport:
    steps = [r for r in records if r.event == "step"]
    if not steps:
        raise ValueError("log contains no step records")
    agents: dict[int, dict] = {}
    for r in steps:
        entry = agents.setdefault(r.b, {"final": r, "best": r, "exploits": 0})
        entry["final"] = r
        if r.F > entry["best"].F:
            entry["best"] = r
    for r in records:
        if r.event == "exploit":
            agents.setdefault(r.b, {"final": r, "best": r, "exploits": 0})["exploits"] += 1

    rows = [
        AgentReport(
            agent=b,
            final_F=entry["final"].F,
            best_F=entry["best"].F,
            best_round=entry["best"].t,
            exploit_count=entry["exploits"],
            best_config=entry["best"].x,
        )
        for b, entry in sorted(agents.items())
    ]
    best = max(rows, key=lambda row: (row.best_F, -row.agent))
    return LogReport(
        agents=rows,
        best_agent=best.agent,
        best_F=best.best_F,
        exploit_count=sum(row.exploit_count for row in rows),
        rounds=max(r.t for r in steps),
    )


def build_trainer(config: RunConfig) -> Trainer:
    if config.trainer == "tvbench":
        bench = config.bench
        fn = sample_tv_function(bench.d, bench.m, bench.lengthscale, bench.signal_var, bench.omega, config.seed)
        return TvBenchTrainer(fn, noise_std=config.noise_std)
    return QuadraticTrainer(noise_std=config.noise_std)


@dataclass
class BenchResult:
    rows: list[dict]
    summary: dict[str, float]


def run_benchmark(
    config: RunConfig,
    seeds: int,
    policies: Sequence[str] = ("pb2", "pbt", "random"),
    *,
    workers: int = 1,
) -> BenchResult:
    """Run every policy on the same sampled objective for each seed.

    ``config.T`` counts evaluated rounds here, so each (policy, seed) pair
    contributes exactly ``T`` rows.
    """
    if config.trainer != "tvbench":
        raise ValueError("benchmarks need trainer='tvbench'")
    bench = config.bench
    rows: list[dict] = []
    finals: dict[str, list[float]] = {p: [] for p in policies}
    for offset in range(seeds):
        seed = config.seed + offset
        fn = sample_tv_function(bench.d, bench.m, bench.lengthscale, bench.signal_var, bench.omega, seed)
        for policy in policies:
            run_config = config.model_copy(update={"policy": policy, "seed": seed, "T": config.T + 1})
            log = run_schedule(TvBenchTrainer(fn, noise_std=config.noise_std), run_config, workers=workers)
            regret = cumulative_regret(log, fn, bench.grid)
            best_f = _best_score_per_round(log)
            for i, t in enumerate(regret.rounds):
                rows.append(
                    {
                        "round": int(t),
                        "policy": policy,
                        "seed": seed,
                        "r_t": float(regret.instantaneous[i]),
                        "R_t": float(regret.cumulative[i]),
                        "best_F": best_f[int(t)],
                    }
                )
            finals[policy].append(float(regret.cumulative[-1]))
            logger.info("seed %d %s: R_T=%.4f", seed, policy, regret.cumulative[-1])
    summary = {policy: float(np.median(values)) for policy, values in finals.items()}
    return BenchResult(rows=rows, summary=summary)


def _best_score_per_round(log: Sequence[TrialRecord]) -> dict[int, float]:
    best: dict[int, float] = {}
    for r in log:
        if r.event == "step":
            best[r.t] = max(best.get(r.t, -np.inf), r.F)
    return best


def write_regret_csv(path: Path, rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def summary_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(f"{csv_path.stem}_summary.csv")


def write_summary_csv(path: Path, summary: dict[str, float], seeds: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for policy, median in summary.items():
            writer.writerow([policy, seeds, repr(median)])
