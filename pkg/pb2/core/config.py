from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    log_level: Literal["error", "warn", "info", "debug"] = "warn"
    log_dir: Path = Path("runs")
    workers: int = 1
    host: str = "127.0.0.1"
    port: int = 8000

    model_config = SettingsConfigDict(env_prefix="PB2_", env_file=".env", extra="ignore")


settings = Settings()
