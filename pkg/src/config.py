"""
Configuration
Settings read from the environment (and the project .env file) plus logging setup
"""
import logging
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigurationError

PROJECT_ROOT = Path(__file__).parent.parent

logging.getLogger("src").addHandler(logging.NullHandler())

DEFAULT_CORS_ORIGINS = ("http://localhost:5173", "http://localhost:3000", "http://127.0.0.1:5173")


def _env_float(name: str, default: float, positive: bool = True) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be a number, got '{raw}'")
    if positive and not value > 0:
        raise ConfigurationError(f"{name} must be > 0, got {value}")
    return value


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got '{raw}'")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True)
class Settings:
    """Runtime settings"""

    newton_tolerance: float = 1e-12
    newton_max_iterations: int = 50
    newton_step_tolerance: float = 1e-8
    quad_rel_tolerance: float = 1e-10
    quad_max_subintervals: int = 40
    max_jet_order: int = 4
    fd_step: float = 1e-5
    rng_seed: int = 0
    grid_workers: int = 1
    log_level: str = "WARNING"
    cors_origins: Tuple[str, ...] = field(default=DEFAULT_CORS_ORIGINS)

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from PBS_* environment variables"""
        origins = os.getenv("PBS_CORS_ORIGINS")
        return cls(
            newton_tolerance=_env_float("PBS_NEWTON_TOL", 1e-12),
            newton_max_iterations=_env_int("PBS_NEWTON_MAX_ITER", 50, minimum=1),
            newton_step_tolerance=_env_float("PBS_NEWTON_STEP_TOL", 1e-8),
            quad_rel_tolerance=_env_float("PBS_QUAD_RTOL", 1e-10),
            quad_max_subintervals=_env_int("PBS_QUAD_MAX_SUBINTERVALS", 40, minimum=1),
            max_jet_order=_env_int("PBS_MAX_JET_ORDER", 4, minimum=1),
            fd_step=_env_float("PBS_FD_STEP", 1e-5),
            rng_seed=_env_int("PBS_RNG_SEED", 0),
            grid_workers=_env_int("PBS_GRID_WORKERS", 1, minimum=1),
            log_level=os.getenv("PBS_LOG_LEVEL", "WARNING").upper(),
            cors_origins=tuple(o.strip() for o in origins.split(",") if o.strip())
            if origins else DEFAULT_CORS_ORIGINS,
        )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load .env once and return the cached settings"""
    load_dotenv(PROJECT_ROOT / ".env")
    return Settings.from_env()


def configure_logging(level: Optional[str] = None) -> None:
    """Attach a stderr handler to the package logger"""
    level = (level or get_settings().log_level).upper()
    package_logger = logging.getLogger("src")
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.NullHandler)
               for h in package_logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        package_logger.addHandler(handler)
    package_logger.setLevel(getattr(logging, level, logging.WARNING))
