"""
Experiment configuration: environment defaults, flat key = value files and CLI overrides.
"""

import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError
from src.models import DomainShape, FluxKind, ManufacturedKind, PotentialFamily, SourceKind

STAGE_ORDER = ["validate", "transform", "solve", "inequalities", "estimates", "regularity"]


class ExperimentConfig(BaseModel):
    """One experiment: potential, data, grid, estimate parameters and run control"""

    # potential
    potential: PotentialFamily = PotentialFamily.ISOTROPIC
    a: float = Field(default=2.0, gt=0)
    b: float = Field(default=0.5, gt=0)
    eps: float = Field(default=0.5, gt=-1.0, lt=1.0)
    amplitude: float = Field(default=0.05, ge=0.0, lt=0.5)
    kappa: float = Field(default=4.0, ge=1.0)
    width: float = Field(default=0.3, gt=0)
    potential_path: Optional[str] = None
    mask_path: Optional[str] = None
    lambda_lo: Optional[float] = Field(default=None, gt=0)
    lambda_hi: Optional[float] = Field(default=None, gt=0)

    # domain and grid
    domain: DomainShape = DomainShape.SQUARE
    extent: float = Field(default=1.0, gt=0)
    grid: int = Field(default=65, ge=17, le=1025)

    # data
    flux: FluxKind = FluxKind.ZERO
    flux_x: float = 1.0
    flux_y: float = 0.0
    source: SourceKind = SourceKind.ZERO
    source_value: float = 1.0
    source_exponent: float = Field(default=0.5, ge=0.0, lt=2.0)
    manufactured: ManufacturedKind = ManufacturedKind.NONE

    # estimates
    q: float = Field(default=4.0, gt=2.0)
    two_star: float = Field(default=4.0, gt=2.0)
    beta: Optional[float] = Field(default=None, gt=0)
    eps_ladder: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 3.0, 4.0])
    heights: List[float] = Field(default_factory=lambda: [0.03, 0.06, 0.12, 0.24])
    harnack_height: float = Field(default=0.1, gt=0)
    sobolev_trials: int = Field(default=50, ge=1)
    family_size: int = Field(default=10, ge=1)
    path_tol: float = Field(default=1e-3, gt=0)

    # run control
    stages: List[str] = Field(default_factory=lambda: list(STAGE_ORDER))
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    out: str = "out"
    log_level: str = "INFO"

    @field_validator("stages")
    @classmethod
    def _known_stages(cls, stages: List[str]) -> List[str]:
        unknown = [s for s in stages if s not in STAGE_ORDER]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; choose from {STAGE_ORDER}")
        return [s for s in STAGE_ORDER if s in stages]

    @field_validator("eps_ladder")
    @classmethod
    def _ladder_range(cls, ladder: List[float]) -> List[float]:
        if not ladder or any(not 0.0 < e <= 4.0 for e in ladder):
            raise ValueError("eps_ladder values must lie in (0, 4]")
        return sorted(ladder)

    @field_validator("heights")
    @classmethod
    def _positive_heights(cls, heights: List[float]) -> List[float]:
        if any(h <= 0 for h in heights):
            raise ValueError("heights must be positive")
        return sorted(heights)

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.lambda_lo is not None and self.lambda_hi is not None and self.lambda_lo > self.lambda_hi:
            raise ValueError(f"lambda_lo = {self.lambda_lo} exceeds lambda_hi = {self.lambda_hi}")
        if self.potential == PotentialFamily.GRIDTXT:
            if not self.potential_path:
                raise ValueError("potential = gridtxt needs potential_path")
            if self.lambda_lo is None or self.lambda_hi is None:
                raise ValueError("potential = gridtxt needs lambda_lo and lambda_hi")
        for path in (self.potential_path, self.mask_path):
            if path and not Path(path).exists():
                raise ValueError(f"referenced file {path} does not exist")
        return self


def _load_default_config() -> Dict[str, Any]:
    """Defaults from LMA_* environment variables (after .env is loaded)"""
    env = {
        "grid": os.getenv("LMA_GRID"),
        "seed": os.getenv("LMA_SEED"),
        "threads": os.getenv("LMA_THREADS"),
        "out": os.getenv("LMA_OUT"),
        "log_level": os.getenv("LOG_LEVEL"),
    }
    return {k: v for k, v in env.items() if v is not None}


def _split_list(value: str) -> List[str]:
    return [item for item in value.replace(",", " ").split() if item]


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse flat `key = value` lines; `#` starts a comment, blank lines are skipped.

    Raises:
        ConfigError: malformed line, duplicate key or key the config does not know
    """
    known = set(ExperimentConfig.model_fields)
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", details={"key": key})
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", details={"key": key})
        annotation = str(ExperimentConfig.model_fields[key].annotation)
        values[key] = _split_list(value) if "List" in annotation or "list" in annotation else value
    return values


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                             for err in e.errors())
        raise ConfigError(f"invalid configuration: {problems}", details={"errors": len(e.errors())}) from e


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Layer .env / LMA_* defaults, the config file at `path` and explicit overrides
    (CLI flags), in that order.
    """
    load_dotenv()
    values = _load_default_config()
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config file {path} does not exist")
        values.update(parse_config_text(file.read_text(), str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = build_config(values)
    logger.debug(f"Loaded config: potential={config.potential.value}, grid={config.grid}, seed={config.seed}")
    return config
