"""Synthetic time-varying objectives, regret evaluation and toy trainers.

A benchmark function is a random Fourier feature approximation of a draw
from GP(0, k_SE) whose feature weights follow

    w_{t+1} = sqrt(1 - omega) * w_t + sqrt(omega) * g,    g ~ N(0, I)

so consecutive rounds are correlated exactly as the time kernel assumes.
"""

import copy
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping

import numpy as np

from pb2.core.errors import Unsupported
from pb2.schemas.trial import TrialRecord

logger = logging.getLogger(__name__)

DEFAULT_GRID = {1: 2048, 2: 256}


class BenchmarkFunction:
    def __init__(
        self,
        frequencies: np.ndarray,
        phases: np.ndarray,
        omega: float,
        lengthscale: float,
        signal_var: float,
        rng: np.random.Generator,
        initial_weights: np.ndarray | None = None,
    ):
        self.frequencies = np.asarray(frequencies, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.m, self.d = self.frequencies.shape
        self.omega = float(omega)
        self.lengthscale = float(lengthscale)
        self.signal_var = float(signal_var)
        self._rng = rng
        first = rng.standard_normal(self.m) if initial_weights is None else np.asarray(initial_weights, dtype=float)
        self.weight_history: list[np.ndarray] = [first]
        self._lock = threading.Lock()

    def weights(self, t: int) -> np.ndarray:
        """Weight vector of round ``t`` (1-based), materialized lazily."""
        if t < 1:
            raise ValueError("rounds start at 1")
        with self._lock:
            keep, mix = math.sqrt(1.0 - self.omega), math.sqrt(self.omega)
            while len(self.weight_history) < t:
                g = self._rng.standard_normal(self.m)
                self.weight_history.append(keep * self.weight_history[-1] + mix * g)
            return self.weight_history[t - 1]

    def features(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.cos(x @ self.frequencies.T + self.phases)

    def evaluate(self, x, t: int):
        """f_t at one point (float) or at each row of a matrix (array)."""
        x = np.asarray(x, dtype=float)
        values = math.sqrt(2.0 * self.signal_var / self.m) * (self.features(x) @ self.weights(t))
        return float(values[0]) if x.ndim == 1 else values


@dataclass(frozen=True)
class RegretSeries:
    rounds: np.ndarray
    instantaneous: np.ndarray
    cumulative: np.ndarray
    optima_x: np.ndarray
    optima_f: np.ndarray
    per_agent: np.ndarray = field(repr=False)


def sample_tv_function(
    d: int,
    m: int,
    lengthscale: float,
    signal_var: float,
    omega: float,
    seed: int,
) -> BenchmarkFunction:
    if d < 1 or m < 64:
        raise ValueError("need d >= 1 and m >= 64")
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    frequencies = rng.normal(0.0, 1.0 / lengthscale, size=(m, d))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=m)
    return BenchmarkFunction(frequencies, phases, omega, lengthscale, signal_var, rng)


def eval_tv(fn: BenchmarkFunction, x, t: int):
    return fn.evaluate(x, t)


def _grid(d: int, resolution: int | None) -> np.ndarray:
    if d > 2:
        raise Unsupported(f"grid argmax is limited to d <= 2, got d={d}")
    n = resolution or DEFAULT_GRID[d]
    axis = np.linspace(0.0, 1.0, n)
    if d == 1:
        return axis[:, None]
    a, b = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def true_argmax(fn: BenchmarkFunction, t: int, resolution: int | None = None) -> tuple[np.ndarray, float]:
    grid = _grid(fn.d, resolution)
    values = fn.evaluate(grid, t)
    best = int(np.argmax(values))
    return grid[best], float(values[best])


def cumulative_regret(
    log: list[TrialRecord], fn: BenchmarkFunction, resolution: int | None = None
) -> RegretSeries:
    """Batch regret per round: grid optimum minus the best agent's value.

    Values slightly above the grid optimum count as zero regret.
    """
    by_round: dict[int, dict[int, list[float]]] = {}
    for record in log:
        if record.event == "step":
            by_round.setdefault(record.t, {})[record.b] = record.u
    rounds = np.array(sorted(by_round), dtype=np.int64)
    n_agents = 1 + max((b for agents in by_round.values() for b in agents), default=-1)

    optima_x = np.zeros((len(rounds), fn.d))
    optima_f = np.zeros(len(rounds))
    per_agent = np.full((len(rounds), n_agents), np.nan)
    instantaneous = np.zeros(len(rounds))
    for i, t in enumerate(rounds):
        optima_x[i], optima_f[i] = true_argmax(fn, int(t), resolution)
        agents = by_round[int(t)]
        ids = sorted(agents)
        achieved = fn.evaluate(np.array([agents[b] for b in ids]), int(t))
        per_agent[i, ids] = np.maximum(optima_f[i] - achieved, 0.0)
        instantaneous[i] = max(optima_f[i] - float(np.max(achieved)), 0.0)
    return RegretSeries(
        rounds=rounds,
        instantaneous=instantaneous,
        cumulative=np.cumsum(instantaneous),
        optima_x=optima_x,
        optima_f=optima_f,
        per_agent=per_agent,
    )


class QuadraticTrainer:
    """Gradient descent on a fixed ill-conditioned quadratic.

    theta <- theta - lr * A theta with diagonal A spanning [1, 50]; the score
    is F = -theta^T A theta.
    """

    dim = 10

    def __init__(self, noise_std: float = 0.0, a_min: float = 1.0, a_max: float = 50.0):
        self.noise_std = noise_std
        self.curvature = np.linspace(a_min, a_max, self.dim)

    def init(self, seed: int, config: Mapping[str, float]) -> np.ndarray:
        return np.random.default_rng(seed).standard_normal(self.dim)

    def step(self, state: np.ndarray, config: Mapping[str, float]) -> tuple[np.ndarray, float]:
        theta = state - config["lr"] * self.curvature * state
        return theta, self.evaluate(theta)

    def clone(self, state: np.ndarray) -> np.ndarray:
        return state.copy()

    def evaluate(self, state: np.ndarray) -> float:
        return float(-np.sum(self.curvature * state * state))


@dataclass
class BenchState:
    round: int = 0
    score: float = 0.0


class TvBenchTrainer:
    """Each step earns f_t(x) on a benchmark function, so y_t = f_t(x_t)."""

    def __init__(self, fn: BenchmarkFunction, noise_std: float = 0.0):
        self.fn = fn
        self.noise_std = noise_std
        self._names = [f"x{i}" for i in range(fn.d)]

    def init(self, seed: int, config: Mapping[str, float]) -> BenchState:
        return BenchState()

    def step(self, state: BenchState, config: Mapping[str, float]) -> tuple[BenchState, float]:
        t = state.round + 1
        gain = self.fn.evaluate(np.array([config[name] for name in self._names]), t)
        new = BenchState(round=t, score=state.score + gain)
        return new, new.score

    def clone(self, state: BenchState) -> BenchState:
        return copy.deepcopy(state)

    def evaluate(self, state: BenchState) -> float:
        return state.score


def toy_trainer(kind: Literal["quadratic"] = "quadratic", **kwargs: Any) -> QuadraticTrainer:
    if kind != "quadratic":
        raise Unsupported(f"unknown toy trainer {kind!r}")
    return QuadraticTrainer(**kwargs)
