"""Population scheduling: exploit by weight copying, explore by policy.

Every ``t_ready`` rounds the bottom quantile of agents copies the weights of
a random top-quantile agent (exploit) and then receives a new config from
the explore policy: PB2's time-varying GP bandit, PBT's perturb/resample, or
uniform random search.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from pb2.acquisition import BetaSchedule, generate_candidates, select_batch
from pb2.core.errors import NumericalFailure, ResumeMismatch, TrainerFailure
from pb2.kernels import GpHyperparams, GpInputs
from pb2.models.population import AgentState, PopulationState
from pb2.models.trainer import Trainer
from pb2.schemas.run import GpSettings, RunConfig
from pb2.schemas.trial import TrialRecord
from pb2.searchspace import Config, SearchSpace, denormalize, normalize, sample_uniform
from pb2 import trialstore
from pb2.tvgp import HyperparamBounds, fit, optimize_hyperparams

logger = logging.getLogger(__name__)

TELESCOPING_TOL = 1e-9


def quantile_count(size: int, quantile: float) -> int:
    """Agents in each of the top and bottom groups; the groups never overlap."""
    return min(math.ceil(quantile * size), size // 2)


def exploit(pop: PopulationState, quantile: float, trainer: Trainer) -> list[tuple[int, int]]:
    """Copy weights from random top agents into the bottom agents.

    Agents are ranked by current score, ties broken by lower id first, so
    with equal scores the highest ids lose. Configs are left untouched.
    """
    if pop.size < 2:
        return []
    n = quantile_count(pop.size, quantile)
    ranked = sorted(pop.agents, key=lambda a: (-a.score, a.id))
    top, bottom = ranked[:n], ranked[-n:]
    pairs = []
    for loser in sorted(bottom, key=lambda a: a.id):
        winner = top[int(pop.rng.integers(len(top)))]
        loser.trainer_state = trainer.clone(winner.trainer_state)
        loser.score = winner.score
        loser.lineage.append((pop.round, winner.id))
        pairs.append((loser.id, winner.id))
    return pairs


def random_explore(space: SearchSpace, rng: np.random.Generator) -> Config:
    return sample_uniform(space, rng)


def pbt_explore(source: Mapping[str, float], epsilon: float, space: SearchSpace, rng: np.random.Generator) -> Config:
    """Resample with probability ``epsilon``, else scale each value by U[0.8, 1.2]."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.uniform() < epsilon:
        return sample_uniform(space, rng)
    factors = rng.uniform(0.8, 1.2, size=space.d)
    return {dim.name: dim.clamp(source[dim.name] * f) for dim, f in zip(space.dims, factors)}


def step_observations(records: Sequence[TrialRecord]) -> list[tuple[list[float], int, float]]:
    return [(r.u, r.t, r.y) for r in records if r.event == "step"]


def pb2_explore(
    records: Sequence[TrialRecord],
    pop: PopulationState,
    losers: Sequence[int],
    space: SearchSpace,
    gp: GpSettings,
    sched: BetaSchedule,
    hp: GpHyperparams,
    t_query: int,
) -> dict[int, Config]:
    """Select configs for ``losers`` by batch UCB on a time-varying GP.

    Agents that keep training enter the batch as pending points at
    ``t_query``. Falls back to uniform sampling with no data or when the GP
    cannot be factorized.
    """
    losers = sorted(losers)
    data = step_observations(records)
    if not data:
        return {b: sample_uniform(space, pop.rng) for b in losers}
    try:
        model = fit(data, hp, gp.max_records)
        survivors = [a for a in pop.agents if a.id not in set(losers)]
        pending = GpInputs(
            u=np.array([normalize(a.config, space) for a in survivors]).reshape(-1, space.d),
            times=np.full(len(survivors), t_query),
        )
        selection = select_batch(
            model,
            pending,
            len(losers),
            t_query,
            sched,
            lambda rng: generate_candidates(
                model,
                rng,
                n_uniform=gp.n_uniform,
                n_best=gp.n_best,
                n_local=gp.n_local,
                local_std=gp.local_std,
            ),
            pop.rng,
        )
    except NumericalFailure as exc:
        logger.warning("GP selection failed at round %d (%s); sampling uniformly", pop.round, exc)
        return {b: sample_uniform(space, pop.rng) for b in losers}
    logger.debug("round %d: beta=%.4f, picks %s", pop.round, selection.beta, selection.indices)
    return {b: denormalize(np.clip(point, 0.0, 1.0), space) for b, point in zip(losers, selection.points)}


class ExplorePolicy(Protocol):
    name: str

    def explore(
        self,
        pop: PopulationState,
        pairs: Sequence[tuple[int, int]],
        records: Sequence[TrialRecord],
    ) -> dict[int, Config]: ...


class RandomPolicy:
    name = "random"

    def __init__(self, space: SearchSpace):
        self.space = space

    def explore(self, pop, pairs, records):
        return {loser: random_explore(self.space, pop.rng) for loser, _ in sorted(pairs)}


class PBTPolicy:
    name = "pbt"

    def __init__(self, space: SearchSpace, epsilon: float):
        self.space = space
        self.epsilon = epsilon

    def explore(self, pop, pairs, records):
        return {
            loser: pbt_explore(pop.agent(winner).config, self.epsilon, self.space, pop.rng)
            for loser, winner in sorted(pairs)
        }


class PB2Policy:
    """Batch GP-UCB explore; ``static`` pins omega to 0 (no time kernel)."""

    def __init__(self, space: SearchSpace, gp: GpSettings, *, static: bool = False):
        self.space = space
        self.gp = gp
        self.static = static
        self.name = "pbt_gp" if static else "pb2"
        self.sched = BetaSchedule(c1=gp.beta_c1, c2=gp.beta_c2, floor=gp.beta_floor)
        self.bounds = HyperparamBounds(omega=(gp.omega_low, gp.omega_high))
        self.hp = GpHyperparams.default(space.d, omega=0.0 if static else 0.1)
        self.calls = 0

    def _refresh(self, records: Sequence[TrialRecord], rng: np.random.Generator) -> None:
        data = step_observations(records)
        if not self.gp.optimize or len(data) < 2 or self.calls % self.gp.reopt_stride:
            return
        self.hp = optimize_hyperparams(
            data,
            self.bounds,
            rng,
            n_starts=self.gp.n_starts,
            max_iter=self.gp.max_iter,
            max_records=self.gp.max_records,
            fix_omega=0.0 if self.static else None,
            defaults=GpHyperparams.default(self.space.d, omega=0.0 if self.static else 0.1),
        )

    def explore(self, pop, pairs, records, losers: Sequence[int] | None = None):
        losers = sorted(loser for loser, _ in pairs) if losers is None else sorted(losers)
        self._refresh(records, pop.rng)
        self.calls += 1
        return pb2_explore(records, pop, losers, self.space, self.gp, self.sched, self.hp, pop.round + 1)


def make_policy(config: RunConfig) -> ExplorePolicy:
    if config.policy == "random":
        return RandomPolicy(config.space)
    if config.policy == "pbt":
        return PBTPolicy(config.space, config.epsilon)
    return PB2Policy(config.space, config.gp, static=config.policy == "pbt_gp")


def check_telescoping(records: Sequence[TrialRecord]) -> float:
    """Largest |sum of y - change in F| over any agent's exploit-free span."""
    worst = 0.0
    spans: dict[int, list[float]] = {}
    for r in records:
        if r.event == "exploit":
            spans.pop(r.b, None)
            continue
        if r.event != "step":
            continue
        if r.b not in spans:
            spans[r.b] = [r.F - r.y, 0.0]
        start, total = spans[r.b]
        total += r.y
        spans[r.b][1] = total
        worst = max(worst, abs(total - (r.F - start)))
    return worst


@dataclass
class _Replay:
    """Previously logged records the run must reproduce before appending."""

    records: list[TrialRecord]
    position: int = 0

    def consume(self, record: TrialRecord) -> bool:
        if self.position >= len(self.records):
            return False
        expected = self.records[self.position]
        if expected != record:
            raise ResumeMismatch(
                f"replay diverged at log record {self.position + 1}: "
                f"expected (t={expected.t}, b={expected.b}, {expected.event}), "
                f"got (t={record.t}, b={record.b}, {record.event})"
            )
        self.position += 1
        return True


class PopulationRunner:
    """Runs the synchronous exploit/explore loop for one seeded population."""

    def __init__(self, trainer: Trainer, config: RunConfig, *, workers: int = 1):
        self.trainer = trainer
        self.config = config
        self.space = config.space
        self.policy = make_policy(config)
        self.workers = max(1, workers)
        self.log: list[TrialRecord] = []
        self.initial_scores: dict[int, float] = {}

        seeds = np.random.SeedSequence(config.seed)
        init_seq, pop_seq, noise_seq = seeds.spawn(3)
        self._agent_seeds = [int(s) for s in init_seq.generate_state(config.B)]
        self._noise_rng = np.random.default_rng(noise_seq)
        self.pop = PopulationState(agents=[], round=0, rng=np.random.default_rng(pop_seq))

    def _record(self, agent: AgentState, event: str, y: float = 0.0, copied_from: int | None = None) -> TrialRecord:
        return TrialRecord(
            t=self.pop.round,
            b=agent.id,
            x=dict(agent.config),
            u=normalize(agent.config, self.space).tolist(),
            y=y,
            F=agent.score,
            event=event,
            copied_from=copied_from,
            seed=self.config.seed,
            policy=self.config.policy,
        )

    def _initialize(self) -> None:
        for b in range(self.config.B):
            config = sample_uniform(self.space, self.pop.rng)
            state = self.trainer.init(self._agent_seeds[b], config)
            self.initial_scores[b] = self.trainer.evaluate(state)
            self.pop.agents.append(
                AgentState(id=b, trainer_state=state, config=config, score=self.initial_scores[b])
            )

    def _step_all(self, executor: ThreadPoolExecutor | None) -> list[tuple[object, float]]:
        def run(agent: AgentState):
            try:
                return self.trainer.step(agent.trainer_state, agent.config)
            except Exception as exc:
                raise TrainerFailure(agent.id, self.pop.round, exc) from exc

        if executor is None:
            return [run(agent) for agent in self.pop.agents]
        return list(executor.map(run, self.pop.agents))

    def _round(self, executor: ThreadPoolExecutor | None) -> list[TrialRecord]:
        self.pop.round += 1
        records: list[TrialRecord] = []
        results = self._step_all(executor)
        noise_std = self.config.noise_std or getattr(self.trainer, "noise_std", 0.0)
        for agent, (state, score) in zip(self.pop.agents, results):
            y = score - agent.score
            if noise_std > 0:
                y += float(self._noise_rng.normal(0.0, noise_std))
            agent.trainer_state, agent.score = state, score
            records.append(self._record(agent, "step", y=y))

        if self.pop.size >= 2 and self.pop.round % self.config.t_ready == 0:
            pairs = exploit(self.pop, self.config.quantile, self.trainer)
            for loser, winner in pairs:
                records.append(self._record(self.pop.agent(loser), "exploit", copied_from=winner))
            history = self.log + records
            if self.config.explore_all and isinstance(self.policy, PB2Policy):
                new_configs = self.policy.explore(self.pop, pairs, history, losers=[a.id for a in self.pop.agents])
            elif self.config.explore_all:
                sources = {loser: winner for loser, winner in pairs}
                everyone = [(a.id, sources.get(a.id, a.id)) for a in self.pop.agents]
                new_configs = self.policy.explore(self.pop, everyone, history)
            else:
                new_configs = self.policy.explore(self.pop, pairs, history)
            for agent_id, config in sorted(new_configs.items()):
                agent = self.pop.agent(agent_id)
                agent.config = config
                records.append(self._record(agent, "explore"))
            if pairs:
                logger.info(
                    "round %d: %s replaced %s",
                    self.pop.round,
                    self.policy.name,
                    ", ".join(f"{loser}<-{winner}" for loser, winner in pairs),
                )
        return records

    def run(self, path: Path | None = None, resume: Sequence[TrialRecord] | None = None) -> list[TrialRecord]:
        replay = _Replay(list(resume or []))
        self._initialize()
        logger.info(
            "starting %s run: B=%d T=%d t_ready=%d seed=%d",
            self.config.policy,
            self.config.B,
            self.config.T,
            self.config.t_ready,
            self.config.seed,
        )
        executor = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        try:
            for _ in range(1, self.config.T):
                try:
                    records = self._round(executor)
                except TrainerFailure:
                    logger.error("trainer failure; %d records already logged", len(self.log))
                    raise
                fresh = [r for r in records if not replay.consume(r)]
                self.log.extend(records)
                if path is not None and fresh:
                    trialstore.append_many(path, fresh)
        finally:
            if executor is not None:
                executor.shutdown()
        if replay.position < len(replay.records):
            raise ResumeMismatch(
                f"log holds {len(replay.records)} records but the run only produced {replay.position}"
            )

        if self.trainer_noise_free():
            drift = check_telescoping(self.log)
            if drift > TELESCOPING_TOL:
                logger.warning("score deltas do not telescope: max drift %.3e", drift)
        logger.info("finished: best F %.6g", max(a.score for a in self.pop.agents))
        return self.log

    def trainer_noise_free(self) -> bool:
        return not self.config.noise_std and not getattr(self.trainer, "noise_std", 0.0)


def run_schedule(
    trainer: Trainer,
    config: RunConfig,
    path: Path | None = None,
    *,
    resume: bool = False,
    workers: int = 1,
) -> list[TrialRecord]:
    """Run the whole schedule, optionally logging to ``path``.

    With ``resume`` the existing log at ``path`` is checked against a
    deterministic replay of the run and only the missing records are
    appended.
    """
    previous: list[TrialRecord] = []
    if path is not None:
        path = Path(path)
        exists = path.exists() and path.stat().st_size > 0
        if exists and not resume:
            raise FileExistsError(f"{path} already exists; pass resume to continue it")
        if exists:
            trialstore.repair(path)
            header, previous = trialstore.read_log(path)
            _, next_round = trialstore.resume_state(previous, config, header)
            logger.info("resuming %s from round %d", path, next_round)
        else:
            trialstore.write_header(path, trialstore.header_for(config))
    return PopulationRunner(trainer, config, workers=workers).run(path, resume=previous)
