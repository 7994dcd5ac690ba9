from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class AgentState:
    id: int
    trainer_state: Any
    config: dict[str, float]
    score: float
    lineage: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class PopulationState:
    agents: list[AgentState]
    round: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def size(self) -> int:
        return len(self.agents)

    def agent(self, agent_id: int) -> AgentState:
        return self.agents[agent_id]
