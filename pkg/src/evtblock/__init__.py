"""Multi-objective block-size selection for block-maxima extreme value analysis."""

from .baselines import compare_hv, enumerate_all, random_baseline, structured_grid
from .grid import (
    GriddedDomain,
    RegionSelector,
    generate_synthetic,
    global_max,
    load_grid,
    select_region,
)
from .gumbel import Estimator, GumbelParams, fit, return_level
from .mobo import OptimizationResult, OptimizerConfig, run
from .objectives import ObjectivePair, ProblemDefinition, eval_objectives
from .pareto import ParetoArchive, hypervolume_2d
from .validate import full_domain_problem, out_of_sample

__version__ = "0.1.0"

__all__ = [
    "GriddedDomain",
    "RegionSelector",
    "generate_synthetic",
    "global_max",
    "load_grid",
    "select_region",
    "Estimator",
    "GumbelParams",
    "fit",
    "return_level",
    "ObjectivePair",
    "ProblemDefinition",
    "eval_objectives",
    "ParetoArchive",
    "hypervolume_2d",
    "OptimizerConfig",
    "OptimizationResult",
    "run",
    "enumerate_all",
    "random_baseline",
    "structured_grid",
    "compare_hv",
    "out_of_sample",
    "full_domain_problem",
]
