"""Append-only JSON-lines trial log.

The first line is ``{"header": {...}}``; every other line is one
``TrialRecord``. A run writes each round with a single ``write`` call, so
a crash leaves at most one truncated trailing line.
"""

import json
import logging
import os
from pathlib import Path
from typing import Iterable

from pydantic import ValidationError

from pb2.core.errors import ParseError, ResumeMismatch, StorageError
from pb2.models.population import AgentState, PopulationState
from pb2.schemas.run import RunConfig
from pb2.schemas.trial import LogHeader, TrialRecord

logger = logging.getLogger(__name__)


def encode(record: TrialRecord) -> str:
    return json.dumps(record.model_dump(mode="python"), separators=(",", ":")) + "\n"


def _write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fh = open(path, "ab")
    except OSError as exc:
        raise StorageError(f"cannot open {path}: {exc}") from exc
    with fh:
        start = fh.tell()
        try:
            fh.write(text.encode("utf-8"))
            fh.flush()
            os.fsync(fh.fileno())
        except OSError as exc:
            try:
                fh.truncate(start)
            except OSError:
                pass
            raise StorageError(f"write to {path} failed: {exc}") from exc


def append(path: Path, record: TrialRecord) -> None:
    _write(path, encode(record))


def append_many(path: Path, records: Iterable[TrialRecord]) -> None:
    text = "".join(encode(r) for r in records)
    if text:
        _write(path, text)


def header_for(config: RunConfig) -> LogHeader:
    return LogHeader(
        config_hash=config.config_hash(),
        seed=config.seed,
        B=config.B,
        policy=config.policy,
        space=config.space.model_dump(mode="json"),
    )


def write_header(path: Path, header: LogHeader) -> None:
    _write(path, json.dumps({"header": header.model_dump(mode="json")}, separators=(",", ":")) + "\n")


def _read_lines(path: Path) -> tuple[list[bytes], bool]:
    """Complete lines plus whether a truncated trailing fragment followed them."""
    raw = Path(path).read_bytes()
    if not raw:
        return [], False
    lines = raw.split(b"\n")
    tail = lines.pop()
    return lines, bool(tail)


def read_log(path: Path) -> tuple[LogHeader | None, list[TrialRecord]]:
    """Header (if any) and records of a log.

    Every complete line must decode as UTF-8 JSON and each (t, b, event)
    may appear once; otherwise ``ParseError`` names the offending line.
    """
    path = Path(path)
    lines, truncated = _read_lines(path)
    header = None
    records: list[TrialRecord] = []
    seen: set[tuple[int, int, str]] = set()
    for number, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw.decode("utf-8"))
            if "header" in doc:
                header = LogHeader.model_validate(doc["header"])
                continue
            record = TrialRecord.model_validate(doc)
        except (UnicodeDecodeError, json.JSONDecodeError, ValidationError, TypeError) as exc:
            raise ParseError(path, number, str(exc).splitlines()[0]) from exc
        key = (record.t, record.b, record.event)
        if key in seen:
            raise ParseError(path, number, f"duplicate {record.event} record for agent {record.b} at round {record.t}")
        seen.add(key)
        records.append(record)
    if truncated:
        logger.warning("%s: skipping truncated final line %d", path, len(lines) + 1)
    return header, records


def load(path: Path) -> list[TrialRecord]:
    return read_log(path)[1]


def read_header(path: Path) -> LogHeader | None:
    return read_log(path)[0]


def repair(path: Path) -> int:
    """Cut a truncated trailing fragment so appends start on a fresh line.

    Returns the number of bytes removed. Complete lines are never touched.
    """
    path = Path(path)
    if not path.exists():
        return 0
    data = path.read_bytes()
    cut = len(data) - (data.rfind(b"\n") + 1)
    if cut:
        with open(path, "r+b") as fh:
            fh.truncate(len(data) - cut)
        logger.warning("%s: removed %d bytes of a truncated record", path, cut)
    return cut


def resume_state(
    records: list[TrialRecord], config: RunConfig, header: LogHeader | None = None
) -> tuple[PopulationState, int]:
    """Rebuild configs, scores and lineage as of the last complete round.

    Trainer states are left as ``None``; the scheduler re-derives them by
    replaying the run from its seed.
    """
    if header is not None and header.config_hash != config.config_hash():
        raise ResumeMismatch(
            f"log was written by run {header.config_hash[:12]} (seed={header.seed}, B={header.B}, "
            f"policy={header.policy}), not {config.config_hash()[:12]}"
        )
    if any(r.seed != config.seed or r.policy != config.policy for r in records):
        raise ResumeMismatch("log records carry a different seed or policy")
    if any(r.b >= config.B for r in records):
        raise ResumeMismatch(f"log has agent ids beyond B={config.B}")

    steps_per_round: dict[int, set[int]] = {}
    for r in records:
        if r.event == "step":
            steps_per_round.setdefault(r.t, set()).add(r.b)
    rounds = sorted(steps_per_round)
    if rounds and rounds != list(range(1, rounds[-1] + 1)):
        raise ResumeMismatch(f"log skips rounds: has steps for {rounds}")
    everyone = set(range(config.B))
    for t in rounds[:-1]:
        if steps_per_round[t] != everyone:
            raise ResumeMismatch(
                f"round {t} has steps for agents {sorted(steps_per_round[t])}, expected all of B={config.B}"
            )
    complete = [t for t, agents in steps_per_round.items() if agents == everyone]
    last = max(complete, default=0)

    agents = {b: AgentState(id=b, trainer_state=None, config={}, score=0.0) for b in range(config.B)}
    for r in records:
        if r.t > last:
            break
        agent = agents[r.b]
        agent.config = dict(r.x)
        agent.score = r.F
        if r.event == "exploit":
            agent.lineage.append((r.t, r.copied_from))
    state = PopulationState(agents=[agents[b] for b in range(config.B)], round=last)
    return state, last + 1
