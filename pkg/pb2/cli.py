import json
import sys
from pathlib import Path

import click
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from pb2 import trialstore
from pb2.core.config import settings
from pb2.core.errors import ConfigError, PB2Error
from pb2.core.logging import configure_logging
from pb2.reporting import (
    build_trainer,
    run_benchmark,
    summarize_log,
    summary_path,
    write_regret_csv,
    write_summary_csv,
)
from pb2.schedulers import run_schedule
from pb2.schemas.report import LogReport
from pb2.schemas.run import RunConfig

console = Console()


def _parse_override(item: str) -> tuple[list[str], object]:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def apply_overrides(doc: dict, overrides: tuple[str, ...]) -> dict:
    for item in overrides:
        path, value = _parse_override(item)
        node = doc
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"--set {item}: {part!r} is not a section")
            node = child
        node[path[-1]] = value
    return doc


def load_config(path: Path | None, overrides: tuple[str, ...] = (), **fixed) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path} must contain a JSON object")
    apply_overrides(doc, overrides)
    doc.update({key: value for key, value in fixed.items() if value is not None})
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from exc


def _fail(exc: Exception, code: int):
    console.print(f"[red]error:[/red] {exc}", highlight=False)
    sys.exit(code)


def _report_table(report: LogReport, title: str) -> Table:
    table = Table(title=title)
    table.add_column("agent", justify="right")
    table.add_column("final F", justify="right")
    table.add_column("best F", justify="right")
    table.add_column("best round", justify="right")
    table.add_column("exploits", justify="right")
    table.add_column("config at best")
    for row in report.agents:
        table.add_row(
            str(row.agent),
            f"{row.final_F:.6g}",
            f"{row.best_F:.6g}",
            str(row.best_round),
            str(row.exploit_count),
            ", ".join(f"{k}={v:.4g}" for k, v in row.best_config.items()),
        )
    best = report.agents[[r.agent for r in report.agents].index(report.best_agent)]
    table.add_row(
        "best",
        "",
        f"{report.best_F:.6g}",
        str(best.best_round),
        str(report.exploit_count),
        f"agent {report.best_agent}",
        style="bold",
    )
    return table


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None
)
set_option = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Dotted-path override")


@click.group()
def cli():
    """Population-based hyperparameter schedules: PB2, PBT and random search."""
    configure_logging(settings.log_level)


@cli.command()
@config_option
@click.option("--policy", type=click.Choice(["pb2", "pbt", "random", "pbt_gp"]), default=None)
@click.option("--seed", type=int, default=None)
@set_option
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Trial log path")
@click.option("--resume", is_flag=True, help="Continue an interrupted log at --out")
def run(config_path, policy, seed, overrides, out, resume):
    """Run one tuning session and write its trial log."""
    try:
        config = load_config(config_path, overrides, policy=policy, seed=seed)
    except ConfigError as exc:
        _fail(exc, 2)
    path = out or config.output or settings.log_dir / f"{config.policy}-seed{config.seed}.jsonl"
    try:
        log = run_schedule(build_trainer(config), config, path, resume=resume, workers=settings.workers)
    except (PB2Error, FileExistsError) as exc:
        _fail(exc, 1)
    console.print(_report_table(summarize_log(log), f"{config.policy} run, seed {config.seed}"))
    console.print(f"log written to {path}")


@cli.command()
@config_option
@click.option("--seeds", type=int, default=10, show_default=True)
@click.option("--policies", default="pb2,pbt,random", show_default=True)
@click.option("--seed", type=int, default=None, help="First seed")
@set_option
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("bench.csv"), show_default=True)
def bench(config_path, seeds, policies, seed, overrides, out):
    """Compare policies on paired synthetic time-varying objectives."""
    try:
        config = load_config(config_path, overrides, seed=seed, trainer="tvbench")
        names = [p.strip() for p in policies.split(",") if p.strip()]
        unknown = set(names) - {"pb2", "pbt", "random", "pbt_gp"}
        if unknown or not names or seeds < 1:
            raise ConfigError(f"bad --policies/--seeds: {policies!r}, {seeds}")
    except ConfigError as exc:
        _fail(exc, 2)
    try:
        result = run_benchmark(config, seeds, names, workers=settings.workers)
    except PB2Error as exc:
        _fail(exc, 1)
    write_regret_csv(out, result.rows)
    write_summary_csv(summary_path(out), result.summary, seeds)

    table = Table(title=f"median cumulative regret over {seeds} seeds (T={config.T})")
    table.add_column("policy")
    table.add_column("median R_T", justify="right")
    for name, median in result.summary.items():
        table.add_row(name, f"{median:.4f}")
    console.print(table)
    console.print(f"curves written to {out}, summary to {summary_path(out)}")


@cli.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def report(log_path):
    """Summarize a trial log per agent."""
    try:
        records = trialstore.load(log_path)
        summary = summarize_log(records)
    except (PB2Error, ValueError) as exc:
        _fail(exc, 1)
    console.print(_report_table(summary, str(log_path)))


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--log-dir", type=click.Path(file_okay=False, path_type=Path), default=None)
def serve(host, port, log_dir):
    """Serve trial-log reports over HTTP."""
    import uvicorn

    if log_dir is not None:
        settings.log_dir = log_dir
    uvicorn.run("pb2.main:app", host=host or settings.host, port=port or settings.port)


if __name__ == "__main__":
    cli()
