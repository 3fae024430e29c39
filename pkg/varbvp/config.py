"""
Configuration module for the variational boundary value solver.
Holds solver defaults, problem-file loading and logging setup.
"""

import os
import logging
from dataclasses import dataclass, fields, asdict
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from varbvp.errors import InvalidConfig

# ============================================================================
# FILE PATHS
# ============================================================================
PROJECT_ROOT = Path(__file__).parent.parent
PROBLEMS_DIR = PROJECT_ROOT / "problems"

# ============================================================================
# SOLVER DEFAULTS
# ============================================================================
DEFAULT_GRID_INTERVALS = 64
DEFAULT_TOLERANCE = 1e-10  # residual infinity-norm target
DEFAULT_MAX_ITER = 50
DEFAULT_CONTINUATION_STEPS = 8
DEFAULT_MAX_BISECTIONS = 20
DEFAULT_DAMPING_FACTOR = 0.5
DEFAULT_MAX_BACKTRACKS = 30
DEFAULT_COND_THRESHOLD = 1e12
DEFAULT_V_MAX = 1e6
ARMIJO_SLOPE = 1e-4

# ============================================================================
# FINITE DIFFERENCES
# ============================================================================
FD_RELATIVE_STEP = 1e-6  # scaled by (1 + |x|)

# ============================================================================
# LEGENDRE TRANSFORM / FLOW COMPOSER / SHOOTING
# ============================================================================
LEGENDRE_MAX_ITER = 50
OUTER_TOLERANCE = 1e-9
OUTER_MAX_ITER = 30
SHOOTING_STEPS = 400
SHOOTING_MAX_ITER = 50
SHOOTING_TOLERANCE = 1e-11

# ============================================================================
# LOGGING
# ============================================================================
LOG_ENV_VAR = "VARBVP_LOG"
LOG_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


@dataclass(frozen=True)
class SolverConfig:
    """Controls for the damped Newton solver and the continuation in h."""

    N: int = DEFAULT_GRID_INTERVALS
    tol: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER
    continuation_steps: int = DEFAULT_CONTINUATION_STEPS
    max_bisections: int = DEFAULT_MAX_BISECTIONS
    damping_factor: float = DEFAULT_DAMPING_FACTOR
    max_backtracks: int = DEFAULT_MAX_BACKTRACKS
    cond_threshold: float = DEFAULT_COND_THRESHOLD
    v_max: float = DEFAULT_V_MAX

    def validate(self) -> "SolverConfig":
        """Raise InvalidConfig unless every control is in range; returns self."""
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise InvalidConfig(f"solver setting '{f.name}' must be positive, got {value}")
        if self.N < 2:
            raise InvalidConfig(f"grid needs at least 2 subintervals, got N={self.N}")
        if self.tol >= 1:
            raise InvalidConfig(f"tol must be below 1, got {self.tol}")
        if not 0 < self.damping_factor < 1:
            raise InvalidConfig(f"damping_factor must lie in (0, 1), got {self.damping_factor}")
        if self.cond_threshold <= 1:
            raise InvalidConfig(f"cond_threshold must exceed 1, got {self.cond_threshold}")
        return self

    def with_overrides(self, **overrides: Any) -> "SolverConfig":
        """Copy with the non-None overrides applied."""
        values = asdict(self)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return SolverConfig(**values).validate()

    @classmethod
    def from_mapping(cls, mapping: Optional[Dict[str, Any]]) -> "SolverConfig":
        """Build from a problem file's `solver:` section."""
        if not mapping:
            return cls().validate()
        known = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise InvalidConfig(f"unknown solver settings: {', '.join(unknown)}")
        try:
            values = {
                key: (int(value) if known[key] in (int, "int") else float(value))
                for key, value in mapping.items()
            }
        except (TypeError, ValueError) as e:
            raise InvalidConfig(f"bad solver setting: {e}") from e
        return cls(**values).validate()


# ============================================================================
# ENVIRONMENT VARIABLES (loaded at runtime)
# ============================================================================

def get_optional_env(name: str, default: str = "") -> str:
    """Get an optional environment variable with a default value."""
    return os.environ.get(name, default)


def get_log_level_name() -> str:
    """Read VARBVP_LOG, falling back to 'info' for unknown values."""
    name = get_optional_env(LOG_ENV_VAR, "info").strip().lower()
    if name not in LOG_LEVELS:
        logging.warning(f"Invalid {LOG_ENV_VAR} '{name}', using 'info'")
        return "info"
    return name


def load_problem_file(path: Path) -> Dict[str, Any]:
    """
    Load a YAML problem description.

    Recognised keys: model, dim, parameters, q1, q2, h, v0, steps and a
    nested `solver` section mirroring SolverConfig.
    Raises InvalidConfig if the file is missing or malformed.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            problem = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise InvalidConfig(f"problem file not found: {path}") from e
    except yaml.YAMLError as e:
        raise InvalidConfig(f"malformed problem file {path}: {e}") from e

    if not isinstance(problem, dict):
        raise InvalidConfig(f"problem file {path} must contain a mapping")

    allowed = {"model", "dim", "parameters", "q1", "q2", "h", "v0", "steps", "solver"}
    unknown = sorted(set(problem) - allowed)
    if unknown:
        raise InvalidConfig(f"unknown keys in {path}: {', '.join(unknown)}")

    if not isinstance(problem.get("parameters") or {}, dict):
        raise InvalidConfig("'parameters' must be a mapping")
    if not isinstance(problem.get("solver") or {}, dict):
        raise InvalidConfig("'solver' must be a mapping")

    logging.getLogger(__name__).info(f"Loaded problem file {path}")
    return problem


def setup_logging(level_name: Optional[str] = None) -> None:
    """
    Configure logging on standard error.
    The level comes from VARBVP_LOG unless given explicitly.
    """
    if level_name is None:
        level_name = get_log_level_name()

    logging.basicConfig(
        level=LOG_LEVELS.get(level_name, logging.INFO),
        format="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[logging.StreamHandler()],
        force=True,
    )
