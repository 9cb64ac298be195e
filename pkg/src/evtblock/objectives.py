"""Block maxima extraction and the (prediction error, KS) objective pair.

A decision vector is what the optimizer searches over. Without coupling it is
the per-dimension block count vector itself; with coupling it is a single
integer ``D1`` expanded to ``(c_1 * D1, ..., c_n * D1)``.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .grid import GriddedDomain
from .gumbel import (
    EstimationError,
    Estimator,
    GumbelParams,
    MaximaSample,
    SolverOptions,
    fit,
    ks_statistic,
    return_level,
)

__all__ = [
    "BlockSpec",
    "EvaluationError",
    "InfeasibleSpecError",
    "ObjectivePair",
    "ProblemDefinition",
    "partition_boundaries",
    "extract_block_maxima",
    "coupled_to_full_spec",
    "eval_objectives",
    "evaluation_row",
    "EVALUATION_COLUMNS",
]

BlockSpec = Tuple[int, ...]


class EvaluationError(Exception):
    """Objectives could not be computed for a block specification."""


class InfeasibleSpecError(EvaluationError):
    """The specification is admissible by bounds but yields no valid fit."""


def partition_boundaries(length: int, parts: int) -> np.ndarray:
    """Boundaries ``round(k * length / parts)``, ``k = 0..parts``.

    Halves round up, so consecutive blocks differ in size by at most one.
    """
    length, parts = int(length), int(parts)
    if parts < 1:
        raise ValueError(f"need at least one part, got {parts}")
    if parts > length:
        raise ValueError(f"cannot split length {length} into {parts} parts")
    k = np.arange(parts + 1, dtype=np.int64)
    return (2 * k * length + parts) // (2 * parts)


def _as_spec(spec) -> BlockSpec:
    if np.isscalar(spec):
        spec = (spec,)
    return tuple(int(d) for d in spec)


def extract_block_maxima(domain: GriddedDomain, spec) -> MaximaSample:
    """Maximum of every block, blocks ordered row-major over block indices."""
    spec = _as_spec(spec)
    if len(spec) != domain.ndim:
        raise ValueError(f"spec {spec} does not match {domain.ndim}-D domain")
    out = domain.values
    for axis, (parts, length) in enumerate(zip(spec, domain.shape)):
        starts = partition_boundaries(length, parts)[:-1]
        out = np.maximum.reduceat(out, starts, axis=axis)
    return MaximaSample(out.ravel())


@dataclass(frozen=True)
class ObjectivePair:
    f1: float
    f2: float
    params: GumbelParams
    block_count: int
    q_hat: float
    wall_time: float = field(default=0.0, compare=False)

    @property
    def point(self) -> Tuple[float, float]:
        return (self.f1, self.f2)


@dataclass(eq=False)
class ProblemDefinition:
    """Everything needed to score a decision vector.

    ``bounds`` apply to the decision vector: one entry per domain axis, or a
    single entry when ``coupling`` (integer factors per axis) is given.
    """

    fit_domain: GriddedDomain
    reference_extreme_q: float
    bounds: Tuple[int, ...]
    block_count_floor: int = 2
    estimator: Estimator = Estimator.MAP
    coupling: Optional[Tuple[int, ...]] = None
    solver: SolverOptions = SolverOptions()
    _cache: Dict[BlockSpec, Union[ObjectivePair, EvaluationError]] = field(
        default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.bounds = _as_spec(self.bounds)
        self.estimator = Estimator(self.estimator)
        n = self.fit_domain.ndim
        if self.coupling is not None:
            self.coupling = _as_spec(self.coupling)
            if len(self.coupling) != n or any(c < 1 for c in self.coupling):
                raise ValueError(f"coupling {self.coupling} must give a positive factor per axis")
            if len(self.bounds) != 1:
                raise ValueError("coupled problems take a single bound")
            limits = [L // c for L, c in zip(self.fit_domain.shape, self.coupling)]
            limit = min(limits)
            if not 1 <= self.bounds[0] <= limit:
                raise ValueError(f"bound {self.bounds[0]} must lie in [1, {limit}]")
        else:
            if len(self.bounds) != n:
                raise ValueError(f"need {n} bounds, got {len(self.bounds)}")
            for j, (u, L) in enumerate(zip(self.bounds, self.fit_domain.shape)):
                if not 1 <= u <= L:
                    raise ValueError(f"bound U_{j + 1}={u} must lie in [1, {L}]")
        if not math.isfinite(self.reference_extreme_q):
            raise ValueError("reference extreme q must be finite")
        if self.block_count_floor < 2:
            raise ValueError("block count floor must be at least 2")

    @property
    def decision_dim(self) -> int:
        return len(self.bounds)

    @property
    def lattice_size(self) -> int:
        return int(np.prod(self.bounds, dtype=np.int64))

    def expand(self, decision) -> BlockSpec:
        decision = _as_spec(decision)
        if self.coupling is None:
            return decision
        if len(decision) != 1:
            raise ValueError(f"coupled problem expects a scalar decision, got {decision}")
        return tuple(c * decision[0] for c in self.coupling)

    def check_decision(self, decision) -> BlockSpec:
        decision = _as_spec(decision)
        if len(decision) != self.decision_dim:
            raise ValueError(f"decision {decision} has wrong length, expected {self.decision_dim}")
        for d, u in zip(decision, self.bounds):
            if not 1 <= d <= u:
                raise ValueError(f"decision {decision} outside bounds {self.bounds}")
        return decision

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def cached(self, decision) -> Optional[Union[ObjectivePair, EvaluationError]]:
        return self._cache.get(_as_spec(decision))


def coupled_to_full_spec(problem: ProblemDefinition, d1: int) -> BlockSpec:
    if problem.coupling is None:
        raise ValueError("problem has no coupling configured")
    return problem.expand((int(d1),))


def _compute(problem: ProblemDefinition, decision: BlockSpec) -> ObjectivePair:
    start = time.perf_counter()
    spec = problem.expand(decision)
    m = int(np.prod(spec, dtype=np.int64))
    if m < problem.block_count_floor:
        raise InfeasibleSpecError(
            f"spec {spec} gives {m} blocks, below the floor of {problem.block_count_floor}")
    q = problem.reference_extreme_q
    if q == 0:
        raise InfeasibleSpecError("reference extreme q is 0; relative error undefined")
    sample = extract_block_maxima(problem.fit_domain, spec)
    try:
        report = fit(sample, problem.estimator, problem.solver)
    except EstimationError as exc:
        raise InfeasibleSpecError(f"spec {spec}: {exc}") from None
    if not report.converged:
        raise InfeasibleSpecError(f"spec {spec}: estimator did not converge")
    q_hat = return_level(report.params, m)
    f1 = abs((q - q_hat) / q)
    f2 = ks_statistic(sample, report.params)
    return ObjectivePair(f1=f1, f2=f2, params=report.params, block_count=m,
                         q_hat=q_hat, wall_time=time.perf_counter() - start)


def eval_objectives(problem: ProblemDefinition, decision) -> ObjectivePair:
    """Score one decision vector, memoized per problem.

    Raises :class:`InfeasibleSpecError` (also memoized) when the block count
    is below the floor, the maxima are degenerate, or ``q == 0``.
    """
    decision = problem.check_decision(decision)
    hit = problem._cache.get(decision)
    if hit is None:
        try:
            hit = _compute(problem, decision)
        except InfeasibleSpecError as exc:
            hit = exc
        with problem._lock:
            hit = problem._cache.setdefault(decision, hit)
    if isinstance(hit, EvaluationError):
        raise hit
    return hit


EVALUATION_COLUMNS = ("decision", "spec", "m", "mu", "sigma", "q_hat", "f1", "f2",
                      "estimator", "error")


def _fmt_spec(spec: Sequence[int]) -> str:
    return "x".join(str(int(d)) for d in spec)


def evaluation_row(problem: ProblemDefinition, decision) -> dict:
    """Flat record for delimited export; infeasible specs carry ``error``."""
    decision = problem.check_decision(decision)
    spec = problem.expand(decision)
    row = {"decision": _fmt_spec(decision), "spec": _fmt_spec(spec),
           "m": int(np.prod(spec, dtype=np.int64)), "estimator": problem.estimator.value}
    try:
        pair = eval_objectives(problem, decision)
    except EvaluationError as exc:
        row.update(mu="", sigma="", q_hat="", f1="", f2="", error=str(exc))
        return row
    row.update(mu=repr(pair.params.mu), sigma=repr(pair.params.sigma),
               q_hat=repr(pair.q_hat), f1=repr(pair.f1), f2=repr(pair.f2), error="")
    return row
