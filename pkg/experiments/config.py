"""
Experiment configuration.

YAML files are deep-merged over config/base.yaml and validated into
pydantic models. Epsilon entries may be given as n (meaning 1/n), as a
float equal to 1/n, or as the string "1/n".
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union
import hashlib
import json
import logging
import os

import pydantic
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core.coefficients import CoefficientField, from_descriptor
from core.exceptions import ConfigError, GeometryError
from core.geometry import PeriodicGeometry, lattice_size

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
BASE_CONFIG = CONFIG_DIR / "base.yaml"
THREADS_ENV = "HOMOGLAB_THREADS"

EpsilonEntry = Union[int, float, str]


def parse_epsilon(value: EpsilonEntry) -> int:
    """Return n for an ε entry."""
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("1/"):
            text = text[2:]
            value = int(text) if text.isdigit() else text
        else:
            value = float(text)
    if isinstance(value, str):
        raise ValueError(f"cannot read epsilon '{value}'")
    try:
        return lattice_size(value)
    except GeometryError as exc:
        raise ValueError(str(exc)) from exc


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Section):
    dim: Literal[1, 2] = 2
    lower: List[float] = [0.25, 0.25]
    upper: List[float] = [0.75, 0.75]

    @model_validator(mode="after")
    def _bounds_match_dim(self):
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError(f"geometry bounds must have {self.dim} entries")
        return self

    def build(self) -> PeriodicGeometry:
        return PeriodicGeometry(dim=self.dim, lower=tuple(self.lower), upper=tuple(self.upper))


class CoefficientConfig(_Section):
    descriptor: str = "identity"
    params: Dict[str, Any] = Field(default_factory=dict)

    def build(self, dim: int) -> CoefficientField:
        return from_descriptor(self.descriptor, dim=dim, **dict(self.params))


class ContrastConfig(_Section):
    """Fixed δ, or δ = ε^p."""
    law: Literal["fixed", "power"] = "power"
    delta: Optional[float] = None
    p: Optional[float] = 2.0

    @model_validator(mode="after")
    def _law_parameters(self):
        if self.law == "fixed":
            if self.delta is None or not self.delta > 0:
                raise ValueError("fixed contrast law needs delta > 0")
        else:
            if self.p is None or not 0.0 <= self.p <= 4.0:
                raise ValueError("power contrast law needs 0 <= p <= 4")
        return self

    def delta_for(self, epsilon: float) -> float:
        return float(self.delta) if self.law == "fixed" else float(epsilon) ** float(self.p)


class EigenConfig(_Section):
    count: int = Field(10, ge=1)
    inclusion_modes: int = Field(60, ge=4)
    thetas: int = Field(10, ge=1)
    intervals: int = Field(4, ge=1)
    tolerance: float = Field(1e-8, gt=0, le=1e-2)
    method: Literal["shift-invert", "lobpcg"] = "shift-invert"
    homogenized_resolution: Optional[int] = Field(None, ge=2)


class CellConfig(_Section):
    resolution: int = Field(32, ge=2)
    delta: Optional[float] = Field(None, gt=0)
    deltas: List[float] = Field(default_factory=list)
    solver: Literal["cg", "direct"] = "cg"
    rtol: float = Field(1e-12, gt=0)
    validation_samples: int = Field(16, ge=1)
    export_matrix: bool = False


class LimitConfig(_Section):
    kappa: float = Field(1.0, gt=0)
    epsilon: EpsilonEntry = 8
    thetas: int = Field(6, ge=1)
    intervals: int = Field(3, ge=1)
    samples: List[float] = Field(default_factory=list)

    @field_validator("epsilon")
    @classmethod
    def _epsilon(cls, value):
        return parse_epsilon(value)


class UnfoldingConfig(_Section):
    epsilons: List[EpsilonEntry] = [4, 8, 16, 32]
    subcells: int = Field(8, ge=1)
    max_frequency: int = Field(1, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _epsilons(cls, values):
        return [parse_epsilon(v) for v in values]


class OracleConfig(_Section):
    n: int = Field(2, ge=1)
    y_resolution: int = Field(8, ge=2)
    kappa: float = Field(1.0, gt=0)
    gamma_samples: int = Field(20, ge=0)


class RegimeConfig(_Section):
    powers: List[float] = [1.0, 2.0, 3.0]
    epsilon: EpsilonEntry = 16
    count: int = Field(10, ge=1)
    cluster_margin: int = Field(40, ge=0)
    bloch_mean_ratio: float = Field(0.1, gt=0)

    @field_validator("epsilon")
    @classmethod
    def _epsilon(cls, value):
        return parse_epsilon(value)

    @field_validator("powers")
    @classmethod
    def _powers(cls, values):
        if not values or any(not 0.0 <= p <= 4.0 for p in values):
            raise ValueError("regime powers must lie in [0, 4]")
        return values


class ToleranceConfig(_Section):
    mean_tol: float = 1e-8
    cluster_gap: float = 1e-6
    inclusion_tolerance: float = 1e-10


class ExperimentConfig(_Section):
    name: str = "homoglab"
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    coefficients: CoefficientConfig = Field(default_factory=CoefficientConfig)
    contrast: ContrastConfig = Field(default_factory=ContrastConfig)
    eigen: EigenConfig = Field(default_factory=EigenConfig)
    cell: CellConfig = Field(default_factory=CellConfig)
    limit: LimitConfig = Field(default_factory=LimitConfig)
    unfolding: UnfoldingConfig = Field(default_factory=UnfoldingConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    regimes: RegimeConfig = Field(default_factory=RegimeConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    epsilons: List[EpsilonEntry] = [4, 8, 16]
    subcells: int = Field(8, ge=1)
    max_fine_resolution: int = Field(256, ge=2)
    output_dir: str = "results"
    seed: Union[int, str] = 0x5EED
    threads: int = Field(1, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _epsilons(cls, values):
        if not values:
            raise ValueError("epsilon list is empty")
        return [parse_epsilon(v) for v in values]

    @field_validator("seed")
    @classmethod
    def _seed(cls, value):
        return parse_seed(value)

    @model_validator(mode="after")
    def _grids_fit(self):
        largest = max(self.epsilons) * self.subcells
        if largest > self.max_fine_resolution:
            raise ValueError(f"fine grid {largest} exceeds max_fine_resolution {self.max_fine_resolution}")
        return self

    @property
    def epsilon_values(self) -> List[float]:
        return [1.0 / n for n in self.epsilons]


def parse_seed(value: Union[int, str]) -> int:
    """Seeds are hex when given as strings ("0x5EED" or "5EED")."""
    if isinstance(value, str):
        try:
            return int(value, 16)
        except ValueError as exc:
            raise ValueError(f"seed {value!r} is not a hex number") from exc
    return int(value)


def _deep_merge(base: Dict, override: Dict) -> Dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_yaml(path: Path) -> Dict:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict] = None) -> ExperimentConfig:
    """Validated config: base.yaml, then `path`, then `overrides`."""
    data = _read_yaml(BASE_CONFIG) if BASE_CONFIG.exists() else {}
    if path is not None:
        data = _deep_merge(data, _read_yaml(Path(path)))
    if overrides:
        data = _deep_merge(data, overrides)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        raise ConfigError(f"invalid configuration{f' in {path}' if path else ''}: {exc}") from exc
    logger.debug("loaded config %s (hash %s)", path, config_hash(cfg)[:12])
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON dump."""
    payload = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def resolve_threads(cli_threads: Optional[int], cfg: Optional[ExperimentConfig] = None) -> int:
    """--threads, then HOMOGLAB_THREADS, then the config value."""
    if cli_threads is not None:
        threads = cli_threads
    else:
        load_dotenv()
        env = os.getenv(THREADS_ENV)
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
        else:
            threads = cfg.threads if cfg is not None else 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads
