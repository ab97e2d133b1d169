import logging
import os
from pathlib import Path
from typing import Any

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="SWINGCERT_", extra="ignore")
    output_dir: Path = Path("./out")
    log_level_name: str = "INFO"
    log_level: int = 20
    pf_tol: float = 1e-10
    pf_max_iter: int = 50
    assumption_slack: float = 1e-9
    eig_max_dim: int = 512
    zero_mode_rtol: float = 1e-8
    sim_rtol: float = 1e-8
    sim_atol: float = 1e-10
    seed: int = 42
    workers: int | None = os.cpu_count()

    def model_post_init(self, context: Any, /) -> None:
        self.log_level = logging.getLevelName(self.log_level_name.upper())
