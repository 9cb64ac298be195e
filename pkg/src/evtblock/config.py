"""Declarative run configuration and the problem it describes.

A configuration is one YAML (or JSON) document. Every section rejects unknown
keys so a typo fails loudly before any computation starts.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .grid import (
    GridError,
    GriddedDomain,
    RegionSelector,
    generate_synthetic,
    global_max,
    load_grid,
    negate_values,
    select_region,
)
from .gumbel import Estimator
from .mobo import OptimizerConfig
from .objectives import ProblemDefinition

__all__ = [
    "ConfigError",
    "RunConfig",
    "DataConfig",
    "RegionConfig",
    "load_config",
    "load_domain",
    "build_problem",
]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticRecipe(_Strict):
    shape: List[int] = Field(min_length=1, max_length=3)
    mean: float = 0.0
    stddev: float = Field(1.0, gt=0)
    seed: int = 0


class DataConfig(_Strict):
    path: Optional[str] = None
    format: Optional[Literal["text", "binary"]] = None
    synthetic: Optional[SyntheticRecipe] = None
    transform: Literal["identity", "negate"] = "identity"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("data needs exactly one of 'path' or 'synthetic'")
        return self


class RegionConfig(_Strict):
    offsets: List[int]
    extent: List[int]

    def selector(self) -> RegionSelector:
        return RegionSelector(tuple(self.offsets), tuple(self.extent))


class ProblemConfig(_Strict):
    bounds: List[int] = Field(min_length=1)
    coupling: Optional[List[int]] = None
    estimator: Literal["mle", "map"] = "map"
    block_count_floor: int = Field(2, ge=2)


class OptimizerSection(_Strict):
    init_points: int = 5
    window: int = 5
    tolerance: float = 1e-5
    growth_factor: float = 0.5
    max_iterations: int = 500
    seed: int = 0
    candidate_pool: Literal["full-lattice", "random-subset"] = "full-lattice"
    pool_size: int = 200_000
    gp_restarts: int = 8

    def build(self, seed: Optional[int] = None) -> OptimizerConfig:
        data = self.model_dump()
        if seed is not None:
            data["seed"] = seed
        try:
            return OptimizerConfig(**data)
        except ValueError as exc:
            raise ConfigError(f"optimizer: {exc}") from None


class BaselineSection(_Strict):
    random_budget: Optional[int] = Field(None, ge=1)
    structured_budget: Optional[int] = Field(None, ge=1)
    structured_counts: Optional[List[int]] = None
    enumeration_cap: int = Field(100_000, ge=1)


class ValidationSection(_Strict):
    replications: int = Field(100, ge=1)
    seed: int = 10_000
    test_paths: Optional[List[str]] = None


class RunConfig(_Strict):
    data: DataConfig
    fit_region: Optional[RegionConfig] = None
    reference_region: Optional[RegionConfig] = None
    problem: ProblemConfig
    optimizer: OptimizerSection = OptimizerSection()
    baselines: BaselineSection = BaselineSection()
    validation: ValidationSection = ValidationSection()
    output: str = "out"


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file; raises :class:`ConfigError`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"config {path}: {where}: {first['msg']}") from None
    if cfg.data.path is not None and not Path(cfg.data.path).is_absolute():
        data = cfg.data.model_copy(update={"path": str(path.parent / cfg.data.path)})
        cfg = cfg.model_copy(update={"data": data})
    return cfg


def load_domain(data: DataConfig) -> GriddedDomain:
    if data.synthetic is not None:
        s = data.synthetic
        domain = generate_synthetic(tuple(s.shape), s.mean, s.stddev, s.seed)
    else:
        domain = load_grid(data.path, data.format)
    return negate_values(domain) if data.transform == "negate" else domain


def build_problem(cfg: RunConfig, domain: Optional[GriddedDomain] = None) -> ProblemDefinition:
    """Fit region feeds the estimator; ``q`` is the reference region's maximum.

    Both regions default to the whole domain.
    """
    domain = domain if domain is not None else load_domain(cfg.data)
    try:
        fit_domain = select_region(domain, cfg.fit_region.selector()) if cfg.fit_region else domain
        ref_domain = (select_region(domain, cfg.reference_region.selector())
                      if cfg.reference_region else domain)
    except GridError as exc:
        raise ConfigError(f"region: {exc}") from None
    p = cfg.problem
    try:
        return ProblemDefinition(
            fit_domain=fit_domain,
            reference_extreme_q=global_max(ref_domain),
            bounds=tuple(p.bounds),
            block_count_floor=p.block_count_floor,
            estimator=Estimator(p.estimator.upper()),
            coupling=tuple(p.coupling) if p.coupling else None,
        )
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None
