"""
Runtime settings loaded from the environment.

Variables (read after ``load_dotenv()``):
  INDOOR_SIM_OUTPUT_DIR   default output directory for CLI commands
  INDOOR_SIM_WORKERS      default batch parallelism
  INDOOR_SIM_LOG_LEVEL    logging level name (DEBUG, INFO, ...)

Simulation inputs never come from here; they live in the JSON config.
"""

import os
import logging
from pathlib import Path
from typing import Optional

logger = logging.getLogger(__name__)

OUTPUT_DIR_VAR = "INDOOR_SIM_OUTPUT_DIR"
WORKERS_VAR = "INDOOR_SIM_WORKERS"
LOG_LEVEL_VAR = "INDOOR_SIM_LOG_LEVEL"

DEFAULT_OUTPUT_DIR = "output"
DEFAULT_WORKERS = 1
DEFAULT_LOG_LEVEL = "INFO"


class SimulatorSettings:
    """
    Environment-backed settings for the command-line surface.

    Usage:
        settings = SimulatorSettings()
        out_dir = settings.output_dir
    """

    def __init__(self):
        self._output_dir: Path = self._load_output_dir()
        self._workers: int = self._load_workers()
        self._log_level: str = self._load_log_level()

    # ------------------------------------------------------------------
    # Loading
    # ------------------------------------------------------------------

    def _load_output_dir(self) -> Path:
        value = os.getenv(OUTPUT_DIR_VAR)
        return Path(value.strip()) if value and value.strip() else Path(DEFAULT_OUTPUT_DIR)

    def _load_workers(self) -> int:
        value = os.getenv(WORKERS_VAR)
        if not value:
            return DEFAULT_WORKERS
        try:
            workers = int(value.strip())
        except ValueError as e:
            raise EnvironmentError(
                f"{WORKERS_VAR} must be a positive integer, got {value!r}"
            ) from e
        if workers < 1:
            raise EnvironmentError(f"{WORKERS_VAR} must be >= 1, got {workers}")
        return workers

    def _load_log_level(self) -> str:
        value = (os.getenv(LOG_LEVEL_VAR) or DEFAULT_LOG_LEVEL).strip().upper()
        if not isinstance(logging.getLevelName(value), int):
            raise EnvironmentError(f"{LOG_LEVEL_VAR} is not a logging level: {value!r}")
        return value

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    @property
    def workers(self) -> int:
        return self._workers

    @property
    def log_level(self) -> str:
        return self._log_level

    def resolve_output_dir(self, override: Optional[str]) -> Path:
        """Return the CLI --out value when given, else the configured default."""
        return Path(override) if override else self._output_dir

    def status(self) -> dict:
        """Return the effective settings for display."""
        return {
            "output_dir": str(self._output_dir),
            "workers": self._workers,
            "log_level": self._log_level,
        }
