from pydantic import BaseModel, Field


class AgentReport(BaseModel):
    """Per-agent summary of a trial log."""

    agent: int = Field(..., description="Agent id", json_schema_extra={"example": 0})
    final_F: float = Field(..., description="Score after the last step")
    best_F: float = Field(..., description="Best score seen at any step")
    best_round: int = Field(..., description="Round of the best score")
    exploit_count: int = Field(..., description="Times this agent's weights were replaced")
    best_config: dict[str, float] = Field(..., description="Config in effect at the best round")


class LogReport(BaseModel):
    """Summary of a whole trial log."""

    agents: list[AgentReport]
    best_agent: int = Field(..., description="Agent holding the best score overall")
    best_F: float
    exploit_count: int = Field(..., description="Total exploit events")
    rounds: int = Field(..., description="Last recorded round")

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "agents": [
                        {
                            "agent": 0,
                            "final_F": -0.02,
                            "best_F": -0.02,
                            "best_round": 49,
                            "exploit_count": 3,
                            "best_config": {"lr": 0.037},
                        }
                    ],
                    "best_agent": 0,
                    "best_F": -0.02,
                    "exploit_count": 3,
                    "rounds": 49,
                }
            ]
        }
    }


class RunSummary(BaseModel):
    """A trial log available to the report service."""

    name: str = Field(..., description="Log file stem", json_schema_extra={"example": "quad-seed7"})
    policy: str | None = None
    seed: int | None = None
    B: int | None = None
    records: int = Field(..., description="Number of trial records")
