from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TrialRecord(BaseModel):
    """One line of a trial log."""

    t: int = Field(..., ge=0, description="Round index", json_schema_extra={"example": 5})
    b: int = Field(..., ge=0, description="Agent id", json_schema_extra={"example": 2})
    x: dict[str, float] = Field(
        ...,
        description="Raw hyperparameter config in effect",
        json_schema_extra={"example": {"lr": 0.01}},
    )
    u: list[float] = Field(..., description="Config mapped onto the unit cube")
    y: float = Field(..., description="Score change over the interval (step events)")
    F: float = Field(..., description="Absolute score after the event")
    event: Literal["step", "exploit", "explore"] = Field(..., description="Event type")
    copied_from: int | None = Field(
        default=None,
        description="Agent whose weights were copied (exploit events only)",
    )
    seed: int = Field(..., ge=0, description="Run seed")
    policy: str = Field(..., description="Explore policy of the run")

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "examples": [
                {
                    "t": 5,
                    "b": 2,
                    "x": {"lr": 0.01},
                    "u": [0.5],
                    "y": 1.25,
                    "F": -40.5,
                    "event": "step",
                    "copied_from": None,
                    "seed": 7,
                    "policy": "pb2",
                }
            ]
        },
    )

    @model_validator(mode="after")
    def _exploit_has_source(self) -> "TrialRecord":
        if self.event == "exploit" and self.copied_from is None:
            raise ValueError("exploit records must name copied_from")
        return self


class LogHeader(BaseModel):
    """First line of a trial log, guarding resume against a different run."""

    config_hash: str = Field(..., description="SHA-256 over seed, space, B and policy")
    seed: int
    B: int
    policy: str
    space: dict = Field(..., description="Serialized search space")
