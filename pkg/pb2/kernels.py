"""Squared-exponential and time kernels, and their Hadamard composite."""

from dataclasses import dataclass, field

import numpy as np

from pb2.core.errors import DimMismatch, TimeOrder


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: tuple[float, ...]
    signal_var: float = 1.0
    noise_var: float = 0.01
    omega: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(l) for l in self.lengthscales))
        if not self.lengthscales or min(self.lengthscales) <= 0:
            raise ValueError("lengthscales must be positive")
        if self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("signal_var and noise_var must be positive")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")

    @classmethod
    def default(cls, d: int, omega: float = 0.1) -> "GpHyperparams":
        return cls(lengthscales=(0.3,) * d, signal_var=1.0, noise_var=0.01, omega=omega)

    @property
    def d(self) -> int:
        return len(self.lengthscales)


@dataclass(frozen=True)
class GpInputs:
    """Unit-cube locations with the round index each was observed at."""

    u: np.ndarray
    times: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        times = np.zeros(len(u), dtype=np.int64) if self.times is None else np.asarray(self.times, dtype=np.int64)
        if times.shape != (len(u),):
            raise DimMismatch(f"{len(u)} inputs but {times.shape} time indices")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.u)

    @classmethod
    def from_pairs(cls, pairs) -> "GpInputs":
        pairs = list(pairs)
        return cls(u=np.array([p[0] for p in pairs], dtype=float), times=np.array([p[1] for p in pairs]))

    def concat(self, other: "GpInputs") -> "GpInputs":
        if len(other) == 0:
            return self
        return GpInputs(u=np.vstack([self.u, other.u]), times=np.concatenate([self.times, other.times]))


def as_inputs(inputs) -> GpInputs:
    return inputs if isinstance(inputs, GpInputs) else GpInputs.from_pairs(inputs)


def _check_dims(u: np.ndarray, hp: GpHyperparams) -> None:
    if u.shape[-1] != hp.d:
        raise DimMismatch(f"inputs have {u.shape[-1]} dimensions, hyperparameters {hp.d}")


def se_matrix(a: np.ndarray, b: np.ndarray, hp: GpHyperparams) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    _check_dims(a, hp)
    _check_dims(b, hp)
    ls = np.asarray(hp.lengthscales)
    diff = (a[:, None, :] - b[None, :, :]) / ls
    return hp.signal_var * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def k_se(u, v, hp: GpHyperparams) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimMismatch(f"{u.shape} vs {v.shape}")
    return float(se_matrix(u, v, hp)[0, 0])


def k_time(i, j, omega: float):
    """(1 - omega) ** (|i - j| / 2); equals 1 at zero lag for every omega."""
    lag = np.abs(np.asarray(i) - np.asarray(j))
    out = np.where(lag == 0, 1.0, np.power(1.0 - omega, lag / 2.0))
    return float(out) if out.ndim == 0 else out


def composite_gram(inputs: GpInputs, hp: GpHyperparams) -> np.ndarray:
    inputs = as_inputs(inputs)
    spatial = se_matrix(inputs.u, inputs.u, hp)
    temporal = k_time(inputs.times[:, None], inputs.times[None, :], hp.omega)
    gram = spatial * temporal
    np.fill_diagonal(gram, hp.signal_var)
    return gram


def composite_cross(query_u, t_query: int, inputs: GpInputs, hp: GpHyperparams) -> np.ndarray:
    """Cross-covariance between queries at round ``t_query`` and the inputs.

    A single query vector gives a 1-D result of length n; a matrix of m
    queries gives an (m, n) matrix.
    """
    inputs = as_inputs(inputs)
    if len(inputs) and t_query < inputs.times.max():
        raise TimeOrder(f"query round {t_query} precedes observed round {inputs.times.max()}")
    q = np.asarray(query_u, dtype=float)
    spatial = se_matrix(q, inputs.u, hp)
    cross = spatial * k_time(t_query, inputs.times, hp.omega)[None, :]
    return cross[0] if q.ndim == 1 else cross
