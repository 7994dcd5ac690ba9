from pathlib import Path
from typing import Literal

from fastapi import APIRouter, HTTPException, Path as PathParam, Query, status

from pb2 import trialstore
from pb2.core.config import settings
from pb2.core.errors import ParseError
from pb2.reporting import summarize_log
from pb2.schemas.report import LogReport, RunSummary
from pb2.schemas.trial import TrialRecord

router = APIRouter(prefix="/runs", tags=["runs"])

_NAME = r"^[A-Za-z0-9][A-Za-z0-9._-]*$"


def _log_path(name: str) -> Path:
    path = settings.log_dir / f"{name}.jsonl"
    if not path.is_file():
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Run not found")
    return path


def _read(path: Path):
    try:
        return trialstore.read_log(path)
    except ParseError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc)) from exc


@router.get(
    "/",
    response_model=list[RunSummary],
    summary="List trial logs",
    description="List every trial log in the configured log directory. Returns an empty list if there are none.",
    response_description="Available runs",
)
def list_runs():
    """List trial logs with their header fields."""
    runs = []
    if not settings.log_dir.is_dir():
        return runs
    for path in sorted(settings.log_dir.glob("*.jsonl")):
        try:
            header, records = trialstore.read_log(path)
        except ParseError:
            continue
        runs.append(
            RunSummary(
                name=path.stem,
                policy=header.policy if header else None,
                seed=header.seed if header else None,
                B=header.B if header else None,
                records=len(records),
            )
        )
    return runs


@router.get(
    "/{name}/report",
    response_model=LogReport,
    summary="Summarize a run",
    description="Per-agent final score, best score, exploit count and the config at the best round.",
    response_description="Run report",
    responses={
        404: {
            "description": "Run not found",
            "content": {"application/json": {"example": {"detail": "Run not found"}}},
        },
        422: {
            "description": "Malformed trial log",
            "content": {"application/json": {"example": {"detail": "runs/a.jsonl:3: Expecting value"}}},
        },
    },
)
def get_report(name: str = PathParam(..., pattern=_NAME, description="Log file stem")):
    """Summarize a run per agent."""
    _, records = _read(_log_path(name))
    if not any(r.event == "step" for r in records):
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail="Run has no step records")
    return summarize_log(records)


@router.get(
    "/{name}/records",
    response_model=list[TrialRecord],
    summary="List trial records",
    description="Records of a run in log order, optionally filtered by event type and round range.",
    response_description="Trial records",
    responses={404: {"description": "Run not found"}},
)
def get_records(
    name: str = PathParam(..., pattern=_NAME, description="Log file stem"),
    event: Literal["step", "exploit", "explore"] | None = Query(default=None),
    round_min: int | None = Query(default=None, ge=0),
    round_max: int | None = Query(default=None, ge=0),
):
    """Return the records of a run, optionally filtered."""
    _, records = _read(_log_path(name))
    return [
        r
        for r in records
        if (event is None or r.event == event)
        and (round_min is None or r.t >= round_min)
        and (round_max is None or r.t <= round_max)
    ]
