"""
Run configuration - one run of the toolkit: the instance, the overrides and the sampling settings.

Values come from the environment defaults in src.core.config, then from an optional plain-text
`key = value` file (`#` starts a comment), then from command-line flags or HTTP parameters.
"""
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from src.core.config import (REL_TOL, ABS_TOL, MAX_STEP, MAX_TIME, SAMPLES, GRID, PATHS, SEED,
                             STRIP_SLACK, MARGIN_FLOOR, OUTPUT_DIR)
from src.core.exceptions import ArtifactError, PreconditionError
from src.dynamics.flow import IntegratorConfig
from src.dynamics.normal_forms import Family, parse_family


@dataclass(frozen=True)
class RunConfig:
    family: Family = Family.SADDLE
    lambda1: float = 1.0
    lambda2: float = 0.25
    tau1: float | None = None
    tau2: float | None = None
    m: int = 2
    alpha: float | None = None
    beta: float | None = None
    word: str | None = None
    lam: float | None = None
    window: str = "-3,3,-3,3"
    geometry: str | None = None
    rel_tol: float = REL_TOL
    abs_tol: float = ABS_TOL
    max_step: float = MAX_STEP
    max_time: float = MAX_TIME
    samples: int = SAMPLES
    grid: int = GRID
    paths: int = PATHS
    seed: int = SEED
    slack: float = STRIP_SLACK
    margin_floor: float = MARGIN_FLOOR
    out: str = OUTPUT_DIR

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        for name in ("lambda1", "lambda2"):
            if not np.isfinite(getattr(self, name)):
                raise PreconditionError(f"{name} must be finite")
        for name in ("tau1", "tau2"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value > 0):
                raise PreconditionError(f"{name} must be positive, got {value}")
        if self.m < 2:
            raise PreconditionError(f"m must be at least 2, got {self.m}")
        if self.samples < 16:
            raise PreconditionError(f"samples must be at least 16, got {self.samples}")
        if self.grid < 2:
            raise PreconditionError(f"grid must be at least 2, got {self.grid}")

    @property
    def output_dir(self) -> Path:
        return Path(self.out)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, max_step=self.max_step,
                                max_time=self.max_time)

    def merged(self, overrides: dict) -> "RunConfig":
        """Copy with every non-None override applied."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise PreconditionError(f"unknown configuration keys: {', '.join(unknown)}")
        values = {k: _coerce(k, v) for k, v in overrides.items() if v is not None}
        return replace(self, **values)

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        return (base or cls()).merged(parse_config_file(path))


_TYPES = {f.name: f.type.__name__ if isinstance(f.type, type) else str(f.type) for f in fields(RunConfig)}


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    kind = _TYPES[key]
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError as e:
        raise PreconditionError(f"{key} = '{value}' is not a number") from e
    return value


def parse_config_file(path) -> dict[str, str]:
    """`key = value` lines; blank lines and `#` comments are skipped."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot read config file {path}: {e}") from e
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"{path}:{number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values
