"""Time-varying Gaussian process: fitting, posterior and marginal likelihood.

Observations are (u, round, y) triples with u in the unit cube. The prior
covariance is the SE kernel multiplied by the time kernel
``(1 - omega) ** (|i - j| / 2)``, so data from older rounds is discounted
instead of discarded. Targets are standardized per fit.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.special import expit, logit

from pb2.core.errors import NumericalFailure
from pb2.kernels import GpHyperparams, GpInputs, composite_cross, composite_gram

logger = logging.getLogger(__name__)

DEFAULT_MAX_RECORDS = 512
_JITTER_START = 1e-6
_JITTER_STOP = 1e-2
_FAILED = 1e10

Observation = tuple[Sequence[float], int, float]


@dataclass(frozen=True)
class GpModel:
    inputs: GpInputs
    y_mean: float
    y_std: float
    targets_std: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    hp: GpHyperparams
    jitter: float

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def max_time(self) -> int:
        return int(self.inputs.times.max())


@dataclass(frozen=True)
class HyperparamBounds:
    lengthscale: tuple[float, float] = (0.02, 5.0)
    signal_var: tuple[float, float] = (0.05, 20.0)
    noise_var: tuple[float, float] = (1e-6, 1.0)
    omega: tuple[float, float] = (1e-4, 0.9)


def _split(records: Sequence[Observation]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(records) == 0:
        raise ValueError("at least one observation is required")
    u = np.array([r[0] for r in records], dtype=float)
    times = np.array([r[1] for r in records], dtype=np.int64)
    y = np.array([r[2] for r in records], dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("GP inputs must lie in the unit cube")
    return u, times, y


def window(times: np.ndarray, max_records: int) -> np.ndarray:
    """Mask of the ``max_records`` most recent observations.

    Observations sharing the cutoff round are all kept, so the window can
    exceed ``max_records`` by less than one round of data.
    """
    if len(times) <= max_records:
        return np.ones(len(times), dtype=bool)
    cutoff = np.sort(times)[-max_records]
    return times >= cutoff


def factorize(gram: np.ndarray, hp: GpHyperparams) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``gram + (noise_var + jitter) I``.

    Jitter starts at 1e-6 * signal_var and grows tenfold up to 1e-2 * signal_var.
    """
    eye = np.eye(len(gram))
    jitter = _JITTER_START * hp.signal_var
    limit = _JITTER_STOP * hp.signal_var * (1 + 1e-9)
    while jitter <= limit:
        try:
            chol = cholesky(gram + (hp.noise_var + jitter) * eye, lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            jitter *= 10.0
            continue
        if np.all(np.isfinite(chol)):
            return chol, jitter
        jitter *= 10.0
    raise NumericalFailure(f"Cholesky failed for {len(gram)} inputs up to jitter {limit:.1e}")


def _standardize(y: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(y))
    std = float(np.std(y))
    if len(y) == 1 or std <= 1e-12 * max(1.0, abs(mean)):
        std = 1.0
    return mean, std


def fit(records: Sequence[Observation], hp: GpHyperparams, max_records: int = DEFAULT_MAX_RECORDS) -> GpModel:
    u, times, y = _split(records)
    keep = window(times, max_records)
    u, times, y = u[keep], times[keep], y[keep]

    y_mean, y_std = _standardize(y)
    targets = (y - y_mean) / y_std
    inputs = GpInputs(u=u, times=times)
    chol, jitter = factorize(composite_gram(inputs, hp), hp)
    alpha = cho_solve((chol, True), targets)
    return GpModel(
        inputs=inputs,
        y_mean=y_mean,
        y_std=y_std,
        targets_std=targets,
        chol=chol,
        alpha=alpha,
        hp=hp,
        jitter=jitter,
    )


def posterior(model: GpModel, u, t_query: int):
    """Posterior mean and latent variance at round ``t_query``.

    ``u`` may be one unit vector (scalars returned) or an (m, d) matrix.
    """
    q = np.asarray(u, dtype=float)
    cross = np.atleast_2d(composite_cross(q, t_query, model.inputs, model.hp))
    mu = model.y_mean + model.y_std * (cross @ model.alpha)
    var = _latent_variance(model, cross) * model.y_std**2
    if q.ndim == 1:
        return float(mu[0]), float(var[0])
    return mu, var


def standardized_variance(model: GpModel, u, t_query: int) -> np.ndarray:
    """Posterior variance in standardized target units; depends on inputs only."""
    cross = np.atleast_2d(composite_cross(np.asarray(u, dtype=float), t_query, model.inputs, model.hp))
    return _latent_variance(model, cross)


def _latent_variance(model: GpModel, cross: np.ndarray) -> np.ndarray:
    v = solve_triangular(model.chol, cross.T, lower=True)
    return np.maximum(model.hp.signal_var - np.sum(v * v, axis=0), 0.0)


def log_marginal_likelihood(
    records: Sequence[Observation], hp: GpHyperparams, max_records: int = DEFAULT_MAX_RECORDS
) -> float:
    model = fit(records, hp, max_records)
    return _lml(model)


def _lml(model: GpModel) -> float:
    n = model.n
    return float(
        -0.5 * model.targets_std @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )


class _Codec:
    """Maps hyperparameters to the unconstrained search vector and back."""

    def __init__(self, d: int, bounds: HyperparamBounds, fix_omega: float | None):
        self.d = d
        self.fix_omega = fix_omega
        box = [np.log(bounds.lengthscale)] * d + [np.log(bounds.signal_var), np.log(bounds.noise_var)]
        if fix_omega is None:
            box.append(logit(np.asarray(bounds.omega)))
        self.bounds = [(float(lo), float(hi)) for lo, hi in box]

    def encode(self, hp: GpHyperparams) -> np.ndarray:
        theta = [*np.log(hp.lengthscales), math.log(hp.signal_var), math.log(hp.noise_var)]
        if self.fix_omega is None:
            theta.append(float(logit(min(max(hp.omega, 1e-12), 1 - 1e-12))))
        lo, hi = np.array(self.bounds).T
        return np.clip(np.array(theta), lo, hi)

    def decode(self, theta: np.ndarray) -> GpHyperparams:
        d = self.d
        omega = self.fix_omega if self.fix_omega is not None else float(expit(theta[d + 2]))
        return GpHyperparams(
            lengthscales=tuple(np.exp(theta[:d])),
            signal_var=float(np.exp(theta[d])),
            noise_var=float(np.exp(theta[d + 1])),
            omega=omega,
        )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = np.array(self.bounds).T
        return rng.uniform(lo, hi)


def optimize_hyperparams(
    records: Sequence[Observation],
    bounds: HyperparamBounds,
    rng: np.random.Generator,
    *,
    n_starts: int = 8,
    max_iter: int = 200,
    max_records: int = DEFAULT_MAX_RECORDS,
    fix_omega: float | None = None,
    defaults: GpHyperparams | None = None,
) -> GpHyperparams:
    """Multi-start Nelder-Mead over the log marginal likelihood.

    Lengthscales and variances are searched in log space, omega in logit
    space. The defaults are always among the candidates, so the result never
    scores below them.
    """
    u, _, _ = _split(records)
    d = u.shape[1]
    if defaults is None:
        defaults = GpHyperparams.default(d)
    if fix_omega is not None:
        defaults = replace(defaults, omega=fix_omega)
    else:
        defaults = replace(defaults, omega=min(max(defaults.omega, bounds.omega[0]), bounds.omega[1]))
    if len(records) < 2:
        return defaults

    codec = _Codec(d, bounds, fix_omega)

    def objective(theta: np.ndarray) -> float:
        try:
            value = log_marginal_likelihood(records, codec.decode(theta), max_records)
        except (NumericalFailure, ValueError):
            return _FAILED
        return -value if np.isfinite(value) else _FAILED

    try:
        best_hp, best_lml = defaults, log_marginal_likelihood(records, defaults, max_records)
    except NumericalFailure:
        best_hp, best_lml = defaults, -math.inf

    starts = [codec.encode(defaults)] + [codec.sample(rng) for _ in range(max(n_starts - 1, 0))]
    succeeded = 0
    for x0 in starts:
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=codec.bounds,
            options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-8},
        )
        if result.fun >= _FAILED:
            continue
        succeeded += 1
        if -result.fun > best_lml:
            best_hp, best_lml = codec.decode(result.x), -float(result.fun)

    if succeeded == 0:
        logger.warning("all %d hyperparameter searches failed; keeping defaults", len(starts))
        return defaults
    logger.debug("optimized GP hyperparameters %s (log evidence %.4f)", best_hp, best_lml)
    return best_hp
