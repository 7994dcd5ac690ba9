import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pb2.searchspace import Dimension, SearchSpace

Policy = Literal["pb2", "pbt", "random", "pbt_gp"]


class GpSettings(BaseModel):
    """GP model and acquisition settings used by the pb2 and pbt_gp policies."""

    max_records: int = Field(default=512, ge=1, description="Window cap N_max on GP training data")
    beta_c1: float = Field(default=0.2, description="c1 in beta_t = c1 + log(c2 t)")
    beta_c2: float = Field(default=0.4, gt=0, description="c2 in beta_t = c1 + log(c2 t)")
    beta_floor: float = Field(default=0.2, ge=0, description="Lower clamp on beta_t")
    optimize: bool = Field(default=True, description="Fit kernel hyperparameters by marginal likelihood")
    reopt_stride: int = Field(default=1, ge=1, description="Re-optimize every this many explore events")
    n_starts: int = Field(default=8, ge=1, description="Nelder-Mead restarts")
    max_iter: int = Field(default=200, ge=1, description="Iterations per restart")
    n_uniform: int = Field(default=1000, ge=0, description="Uniform candidates per selection")
    n_best: int = Field(default=5, ge=0, description="Best observed inputs perturbed locally")
    n_local: int = Field(default=10, ge=0, description="Perturbations per best input")
    local_std: float = Field(default=0.05, gt=0, description="Std of local perturbations (unit cube)")
    omega_low: float = Field(default=1e-4, gt=0, lt=1, description="Lower bound of the omega search")
    omega_high: float = Field(default=0.9, gt=0, lt=1, description="Upper bound of the omega search")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _has_candidates(self) -> "GpSettings":
        if self.n_uniform + self.n_best * self.n_local < 1:
            raise ValueError("n_uniform + n_best * n_local must be at least 1 so explore has candidates")
        return self


class BenchSettings(BaseModel):
    """Synthetic time-varying objective used by the ``tvbench`` trainer."""

    d: int = Field(default=1, ge=1, le=2, description="Input dimension")
    omega: float = Field(default=0.01, ge=0, le=1, description="Forgetting rate of the objective")
    lengthscale: float = Field(default=0.2, gt=0)
    signal_var: float = Field(default=1.0, gt=0)
    m: int = Field(default=1024, ge=64, description="Random Fourier feature count")
    grid: int | None = Field(default=None, ge=2, description="Grid resolution per axis for the argmax oracle")

    model_config = ConfigDict(extra="forbid")


class RunConfig(BaseModel):
    """A complete, reproducible description of one tuning run."""

    policy: Policy = Field(default="pb2", description="Explore policy")
    B: int = Field(default=4, ge=1, description="Population size")
    T: int = Field(default=50, ge=2, description="Rounds; steps run for t = 1 .. T-1")
    t_ready: int = Field(default=1, ge=1, description="Rounds between exploit/explore events")
    quantile: float = Field(default=0.25, gt=0, le=0.5, description="Exploit quantile lambda")
    epsilon: float = Field(default=0.25, ge=0, le=1, description="PBT resample probability")
    seed: int = Field(default=0, ge=0)
    explore_all: bool = Field(default=False, description="Select new configs for every agent, not just losers")
    noise_std: float = Field(default=0.0, ge=0, description="Observation noise added to y")
    space: SearchSpace | None = Field(default=None, description="Defaults to the trainer's natural space")
    trainer: Literal["quadratic", "tvbench"] = "quadratic"
    bench: BenchSettings = Field(default_factory=BenchSettings)
    gp: GpSettings = Field(default_factory=GpSettings)
    output: Path | None = Field(default=None, description="Trial log path")

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "examples": [
                {
                    "policy": "pb2",
                    "B": 4,
                    "T": 50,
                    "t_ready": 5,
                    "seed": 7,
                    "trainer": "quadratic",
                    "space": {"dims": [{"name": "lr", "low": 0.001, "high": 0.05, "scale": "log10"}]},
                }
            ]
        },
    )

    @model_validator(mode="after")
    def _resolve_space(self) -> "RunConfig":
        if self.space is None:
            if self.trainer == "tvbench":
                self.space = SearchSpace.unit(self.bench.d)
            else:
                self.space = SearchSpace(dims=[Dimension(name="lr", low=1e-3, high=0.05, scale="log10")])
        if self.trainer == "quadratic" and "lr" not in self.space.names:
            raise ValueError("the quadratic trainer needs an 'lr' dimension")
        if self.trainer == "tvbench" and self.space != SearchSpace.unit(self.bench.d):
            raise ValueError("the tvbench trainer runs on the unit space x0..x{d-1}")
        if self.gp.omega_low > self.gp.omega_high:
            raise ValueError("gp.omega_low must not exceed gp.omega_high")
        return self

    def config_hash(self) -> str:
        payload = {
            "seed": self.seed,
            "space": self.space.model_dump(mode="json"),
            "B": self.B,
            "policy": self.policy,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
