"""UCB acquisition with batch selection over hallucinated variance."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from pb2.core.errors import NoCandidates
from pb2.kernels import GpInputs, composite_cross, composite_gram
from pb2.tvgp import GpModel, factorize, posterior

logger = logging.getLogger(__name__)

CandidateSource = np.ndarray | Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class BetaSchedule:
    c1: float = 0.2
    c2: float = 0.4
    floor: float = 0.2

    def __post_init__(self):
        if self.c2 <= 0:
            raise ValueError("c2 must be positive")
        if self.floor < 0:
            raise ValueError("floor must be non-negative")


@dataclass(frozen=True)
class BatchSelection:
    points: np.ndarray
    scores: np.ndarray
    indices: list[int]
    beta: float
    means: list[np.ndarray] = field(default_factory=list, repr=False)
    stds: list[np.ndarray] = field(default_factory=list, repr=False)


def beta(t: int, sched: BetaSchedule) -> float:
    if t < 1:
        raise ValueError("round index must be >= 1")
    return max(sched.c1 + math.log(sched.c2 * t), sched.floor)


def ucb(model: GpModel, u, t_query: int, beta_t: float):
    if beta_t < 0:
        raise ValueError("beta must be non-negative")
    mu, var = posterior(model, u, t_query)
    return mu + math.sqrt(beta_t) * np.sqrt(var)


def hallucinated_variance(model: GpModel, extra: GpInputs, queries: np.ndarray, t_query: int) -> np.ndarray:
    """Posterior variance as if ``extra`` had already been observed.

    Targets never enter, so no values are invented for the extra inputs.
    """
    if len(extra) == 0:
        return posterior(model, np.atleast_2d(queries), t_query)[1]
    hp = model.hp
    inputs = model.inputs.concat(extra)
    chol, _ = factorize(composite_gram(inputs, hp), hp)
    cross = np.atleast_2d(composite_cross(np.atleast_2d(queries), t_query, inputs, hp))
    v = solve_triangular(chol, cross.T, lower=True)
    var = hp.signal_var - np.sum(v * v, axis=0)
    return np.maximum(var, 0.0) * model.y_std**2


def generate_candidates(
    model: GpModel,
    rng: np.random.Generator,
    *,
    n_uniform: int = 1000,
    n_best: int = 5,
    n_local: int = 10,
    local_std: float = 0.05,
) -> np.ndarray:
    """Uniform global samples plus Gaussian perturbations of the best observed inputs."""
    d = model.inputs.u.shape[1]
    uniform = rng.uniform(0.0, 1.0, size=(n_uniform, d))
    order = np.argsort(-model.targets_std, kind="stable")[:n_best]
    centres = model.inputs.u[order]
    local = centres[:, None, :] + rng.normal(0.0, local_std, size=(len(centres), n_local, d))
    return np.vstack([uniform, np.clip(local.reshape(-1, d), 0.0, 1.0)])


def select_batch(
    model: GpModel,
    pending: GpInputs | list,
    size: int,
    t_query: int,
    sched: BetaSchedule,
    candidates: CandidateSource,
    rng: np.random.Generator,
) -> BatchSelection:
    """Pick ``size`` points by sequentially maximizing the batch UCB.

    The mean stays that of ``model`` for the whole batch; the variance is
    recomputed with the pending points and earlier picks added as inputs
    observed at ``t_query``. Ties go to the lowest candidate index.
    """
    if size < 1:
        raise ValueError("batch size must be >= 1")
    cands = candidates(rng) if callable(candidates) else np.asarray(candidates, dtype=float)
    cands = np.atleast_2d(cands)
    if cands.size == 0:
        raise NoCandidates("candidate set is empty")

    d = model.inputs.u.shape[1]
    if not isinstance(pending, GpInputs):
        pending = GpInputs(u=np.empty((0, d)), times=np.empty(0)) if len(pending) == 0 else GpInputs.from_pairs(pending)

    beta_t = beta(max(t_query, 1), sched)
    root_beta = math.sqrt(beta_t)
    mu, var0 = posterior(model, cands, t_query)

    chosen: list[int] = []
    scores: list[float] = []
    means: list[np.ndarray] = []
    stds: list[np.ndarray] = []
    hallucinated = pending
    for b in range(size):
        var = var0 if len(hallucinated) == 0 else hallucinated_variance(model, hallucinated, cands, t_query)
        std = np.sqrt(var)
        score = mu + root_beta * std
        pick = int(np.argmax(score))
        chosen.append(pick)
        scores.append(float(score[pick]))
        means.append(mu)
        stds.append(std)
        hallucinated = hallucinated.concat(GpInputs(u=cands[pick : pick + 1], times=np.array([t_query])))
        logger.debug("batch step %d: picked candidate %d (ucb %.4f)", b + 1, pick, score[pick])

    return BatchSelection(
        points=cands[chosen],
        scores=np.array(scores),
        indices=chosen,
        beta=beta_t,
        means=means,
        stds=stds,
    )
