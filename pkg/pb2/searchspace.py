"""Hyperparameter domains and the mapping to the unit hypercube the GP works in."""

import json
import math
from importlib import resources
from typing import Literal, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pb2.core.errors import MissingDimension, OutOfBounds

Config = dict[str, float]


class Dimension(BaseModel):
    """A single continuous hyperparameter."""

    name: str = Field(
        ...,
        min_length=1,
        description="Hyperparameter name, used as the key in raw configs",
        json_schema_extra={"example": "lr"},
    )
    low: float = Field(..., description="Lower bound (inclusive)", json_schema_extra={"example": 1e-5})
    high: float = Field(..., description="Upper bound (inclusive)", json_schema_extra={"example": 1e-3})
    scale: Literal["linear", "log10"] = Field(
        default="linear",
        description="Scaling applied before mapping onto [0, 1]",
    )

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_bounds(self) -> "Dimension":
        if not self.low < self.high:
            raise ValueError(f"dimension {self.name!r}: low must be < high")
        if self.scale == "log10" and self.low <= 0:
            raise ValueError(f"dimension {self.name!r}: log10 scale requires low > 0")
        return self

    def _span(self) -> tuple[float, float]:
        if self.scale == "log10":
            return math.log10(self.low), math.log10(self.high)
        return self.low, self.high

    def to_unit(self, value: float) -> float:
        lo, hi = self._span()
        v = math.log10(value) if self.scale == "log10" else value
        return (v - lo) / (hi - lo)

    def from_unit(self, u: float) -> float:
        if u == 0.0:
            return self.low
        if u == 1.0:
            return self.high
        lo, hi = self._span()
        v = lo + u * (hi - lo)
        value = 10.0**v if self.scale == "log10" else v
        return min(max(value, self.low), self.high)

    def clamp(self, value: float) -> float:
        return min(max(value, self.low), self.high)


class SearchSpace(BaseModel):
    """Ordered set of dimensions; the domain D mapped onto [0, 1]^d."""

    dims: list[Dimension] = Field(..., min_length=1, description="Ordered dimensions")

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "examples": [
                {
                    "dims": [
                        {"name": "lr", "low": 1e-5, "high": 1e-3, "scale": "log10"},
                        {"name": "clip", "low": 0.1, "high": 0.5},
                    ]
                }
            ]
        },
    )

    @model_validator(mode="after")
    def _unique_names(self) -> "SearchSpace":
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        return self

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    @classmethod
    def unit(cls, d: int) -> "SearchSpace":
        """``x0 .. x{d-1}`` on linear [0, 1]; raw and normalized configs coincide."""
        return cls(dims=[Dimension(name=f"x{i}", low=0.0, high=1.0) for i in range(d)])


def normalize(x: Mapping[str, float], space: SearchSpace) -> np.ndarray:
    u = np.empty(space.d)
    for i, dim in enumerate(space.dims):
        if dim.name not in x:
            raise MissingDimension(dim.name)
        value = float(x[dim.name])
        if not dim.low <= value <= dim.high:
            raise OutOfBounds(f"{dim.name}={value} outside [{dim.low}, {dim.high}]")
        u[i] = dim.to_unit(value)
    return u


def denormalize(u, space: SearchSpace) -> Config:
    u = np.asarray(u, dtype=float)
    if u.shape != (space.d,):
        raise OutOfBounds(f"expected a vector of length {space.d}, got shape {u.shape}")
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise OutOfBounds(f"unit vector {u.tolist()} leaves [0, 1]^{space.d}")
    return {dim.name: dim.from_unit(float(ui)) for dim, ui in zip(space.dims, u)}


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Config:
    return denormalize(rng.uniform(0.0, 1.0, size=space.d), space)


def load_preset(name: str) -> SearchSpace:
    """Load one of the shipped search spaces (``ppo``, ``impala``, ``cifar``)."""
    source = resources.files("pb2.presets").joinpath(f"{name}_ranges.json")
    if not source.is_file():
        raise FileNotFoundError(f"no search-space preset named {name!r}")
    return SearchSpace.model_validate(json.loads(source.read_text(encoding="utf-8")))
