import logging
from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

MAX_TREE_STEPS_CEILING = 20_000


class Settings(BaseSettings):
    quadhedge_env: str = Field("development", alias="QUADHEDGE_ENV")
    log_level: str = Field("INFO", alias="QUADHEDGE_LOG_LEVEL")
    # Thread-pool size for path blocks and surface cells. Never changes results.
    workers: int = Field(4, alias="QUADHEDGE_WORKERS")
    # Paths per RNG block. Part of the stream layout, so changing it changes draws.
    path_block: int = Field(2048, alias="QUADHEDGE_PATH_BLOCK")
    ledger_path_cap: int = Field(200, alias="QUADHEDGE_LEDGER_PATH_CAP")
    max_tree_steps: int = Field(5000, alias="QUADHEDGE_MAX_TREE_STEPS")
    trading_days: int = Field(252, alias="QUADHEDGE_TRADING_DAYS")
    output_dir: Path = Field(Path("out"), alias="QUADHEDGE_OUTPUT_DIR")
    default_seed: int = Field(20240101, alias="QUADHEDGE_SEED")
    float_format: str = Field("%.12g", alias="QUADHEDGE_FLOAT_FORMAT")

    model_config = SettingsConfigDict(
        env_file=".env", case_sensitive=False, extra="ignore", populate_by_name=True
    )

    @property
    def is_production(self) -> bool:
        return self.quadhedge_env.strip().lower() in {"production", "prod"}

    def limit_problems(self) -> list[str]:
        """Names of execution limits that are out of range. Empty list = all good."""
        problems: list[str] = []
        if self.workers < 1:
            problems.append("QUADHEDGE_WORKERS")
        if self.path_block < 1:
            problems.append("QUADHEDGE_PATH_BLOCK")
        if self.ledger_path_cap < 0:
            problems.append("QUADHEDGE_LEDGER_PATH_CAP")
        if not 1 <= self.max_tree_steps <= MAX_TREE_STEPS_CEILING:
            problems.append("QUADHEDGE_MAX_TREE_STEPS")
        if self.trading_days < 1:
            problems.append("QUADHEDGE_TRADING_DAYS")
        return problems


def enforce_runtime_limits(cfg: "Settings", log) -> None:
    """Warn on out-of-range limits everywhere; abort startup only in production."""
    problems = cfg.limit_problems()
    if not problems:
        return
    detail = ", ".join(problems) + " is out of range; engines fall back to safe values."
    if cfg.is_production:
        raise RuntimeError(f"Refusing to start in production: {detail}")
    log.warning("Suspicious config: %s (set QUADHEDGE_ENV=production to make this fatal)", detail)


def effective_workers(cfg: "Settings") -> int:
    return max(1, cfg.workers)


def effective_path_block(cfg: "Settings") -> int:
    return max(1, cfg.path_block)


logger = logging.getLogger(__name__)


@lru_cache
def get_settings() -> Settings:
    try:
        settings = Settings()
    except PermissionError:
        logger.warning("Unable to read .env; continuing with environment variables only")
        settings = Settings(_env_file=None)
    return settings
