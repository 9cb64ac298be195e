"""Multi-objective Bayesian optimization of block counts.

The driver alternates GP fitting, EHVI maximization over the integer lattice
and objective evaluation. The reference point starts at the origin and grows
by ``beta * min(f1, f2)`` of each candidate that would add nothing while the
archive is empty; it is frozen at the first successful insertion, after which
the run stops once the mean absolute hypervolume change over the last
``window`` iterations is at most ``tolerance``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from . import gp
from .ehvi import AcquisitionContext, ehvi_exact_many
from .objectives import (
    BlockSpec,
    EvaluationError,
    ObjectivePair,
    ProblemDefinition,
    eval_objectives,
)
from .pareto import ParetoArchive, hvi, replay

__all__ = [
    "OptimizerConfig",
    "Phase",
    "EvaluationEntry",
    "OptimizationResult",
    "OptimizationError",
    "CandidateChoice",
    "run",
    "update_reference_point",
    "check_convergence",
    "select_candidate",
    "lattice",
    "initial_design",
]

logger = logging.getLogger(__name__)

FULL_LATTICE_LIMIT = 200_000
NEIGHBOR_LIMIT = 50


class Phase(str, Enum):
    INIT = "init"
    REFERENCE_PLACEMENT = "reference-placement"
    OPTIMIZATION = "optimization"
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget-exhausted"
    POOL_EXHAUSTED = "pool-exhausted"


class OptimizationError(RuntimeError):
    """The driver cannot continue; ``state`` holds a diagnostic snapshot."""

    def __init__(self, message: str, state: Optional[dict] = None):
        super().__init__(message)
        self.state = state or {}


@dataclass(frozen=True)
class OptimizerConfig:
    init_points: int = 5
    window: int = 5
    tolerance: float = 1e-5
    growth_factor: float = 0.5
    max_iterations: int = 500
    seed: int = 0
    candidate_pool: str = "full-lattice"
    pool_size: int = FULL_LATTICE_LIMIT
    gp_restarts: int = 8

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window N must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not 0 < self.growth_factor <= 1:
            raise ValueError("growth factor must lie in (0, 1]")
        if self.init_points < 2:
            raise ValueError("need at least 2 initial points")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.candidate_pool not in ("full-lattice", "random-subset"):
            raise ValueError(f"unknown candidate pool {self.candidate_pool!r}")


@dataclass
class EvaluationEntry:
    iteration: int
    phase: Phase
    decision: BlockSpec
    spec: BlockSpec
    pair: Optional[ObjectivePair]
    error: Optional[str] = None
    offered: bool = False
    added: bool = False

    @property
    def feasible(self) -> bool:
        return self.pair is not None


@dataclass
class OptimizationResult:
    archive: ParetoArchive
    reference: Tuple[float, float]
    hv_trajectory: List[float]
    evaluations: List[EvaluationEntry]
    log: List[dict]
    iterations: int
    stop_reason: Phase
    phase_times: Dict[str, float] = field(default_factory=dict)
    # seconds per iteration, kept out of the log so the log stays reproducible
    iteration_times: List[float] = field(default_factory=list)

    def replay_archive(self) -> ParetoArchive:
        """Rebuild the archive from the offered evaluations in log order."""
        return replay(self.reference, [(e.decision, e.pair.point)
                                       for e in self.evaluations if e.offered])

    @property
    def final_hv(self) -> float:
        return self.hv_trajectory[-1] if self.hv_trajectory else 0.0


@dataclass(frozen=True)
class CandidateChoice:
    decision: BlockSpec
    ehvi: float
    fallback: bool


def update_reference_point(r: Sequence[float], cand: Sequence[float],
                           beta: float) -> Tuple[float, float]:
    """Shift both coordinates of ``r`` by ``beta * min(cand)``."""
    if not 0 < beta <= 1:
        raise ValueError("growth factor must lie in (0, 1]")
    step = beta * min(cand[0], cand[1])
    return (r[0] + step, r[1] + step)


def check_convergence(hv_trajectory: Sequence[float], window: int,
                      tolerance: float) -> Tuple[Optional[float], bool]:
    """Moving-average stopping rule.

    ``hv_trajectory`` is ``HV_0..HV_t`` for the current phase, so ``t`` is its
    length minus one. Returns ``(None, False)`` while ``t <= window``.
    """
    t = len(hv_trajectory) - 1
    if t <= window:
        return None, False
    recent = np.asarray(hv_trajectory[t - window:], dtype=np.float64)
    c_eps = float(np.mean(np.abs(np.diff(recent))))
    return c_eps, c_eps <= tolerance


def lattice(bounds: Sequence[int]) -> np.ndarray:
    """All integer vectors in ``[1, U_1] x ... x [1, U_n]``, lexicographic order."""
    axes = [np.arange(1, u + 1) for u in bounds]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def _linear_index(decisions: np.ndarray, bounds: Sequence[int]) -> np.ndarray:
    return np.ravel_multi_index(tuple((decisions - 1).T), tuple(bounds))


def select_candidate(ctx: AcquisitionContext, pool: np.ndarray,
                     exclusions: Sequence[BlockSpec] = (),
                     bounds: Optional[Sequence[int]] = None) -> CandidateChoice:
    """EHVI argmax over ``pool`` minus ``exclusions``.

    Ties go to the lexicographically smallest decision; when every value is
    zero that smallest decision is returned and flagged as a fallback.
    """
    pool = np.asarray(pool, dtype=np.int64).reshape(len(pool), -1)
    if len(exclusions) and len(pool):
        if bounds is None:
            bounds = pool.max(axis=0)
        excl = np.asarray(list(exclusions), dtype=np.int64).reshape(len(exclusions), -1)
        keep = ~np.isin(_linear_index(pool, bounds), _linear_index(excl, bounds))
        pool = pool[keep]
    if len(pool) == 0:
        raise OptimizationError("candidate pool is empty after exclusions")
    order = np.lexsort(pool.T[::-1])
    pool = pool[order]
    values = ehvi_exact_many(ctx, pool)
    best = int(np.argmax(values))
    value = float(values[best])
    return CandidateChoice(tuple(int(v) for v in pool[best]), value, not value > 0)


def initial_design(bounds: Sequence[int], k: int, seed: int,
                   exclude: Sequence[BlockSpec] = ()) -> List[BlockSpec]:
    """``k`` distinct lattice points from a scrambled Halton sequence."""
    d = len(bounds)
    size = int(np.prod(bounds, dtype=np.int64))
    upper = np.asarray(bounds)
    sampler = qmc.Halton(d, scramble=True, seed=np.random.Generator(np.random.PCG64(seed)))
    seen = set(exclude)
    out: List[BlockSpec] = []
    target = min(k, size - len(seen))
    while len(out) < target:
        u = sampler.random(1)[0]
        cand = tuple(int(v) for v in np.minimum(1 + np.floor(u * upper), upper))
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return out


def _neighbors(solutions: Sequence[BlockSpec], bounds: Sequence[int]) -> np.ndarray:
    d = len(bounds)
    offsets = lattice([3] * d) - 2
    offsets = offsets[np.any(offsets != 0, axis=1)]
    found = []
    seen = set()
    for sol in sorted(solutions):
        for off in offsets:
            nb = tuple(int(a + b) for a, b in zip(sol, off))
            if all(1 <= v <= u for v, u in zip(nb, bounds)) and nb not in seen:
                seen.add(nb)
                found.append(nb)
                if len(found) >= NEIGHBOR_LIMIT:
                    return np.asarray(found, dtype=np.int64)
    return np.asarray(found, dtype=np.int64).reshape(-1, d)


def _candidate_pool(problem: ProblemDefinition, config: OptimizerConfig,
                    full: Optional[np.ndarray], archive: ParetoArchive,
                    iteration: int) -> np.ndarray:
    if full is not None:
        return full
    bounds = problem.bounds
    rng = np.random.Generator(np.random.PCG64([config.seed, iteration]))
    size = min(config.pool_size, problem.lattice_size)
    idx = rng.choice(problem.lattice_size, size=size, replace=False)
    sample = np.stack(np.unravel_index(idx, bounds), axis=1) + 1
    nbrs = _neighbors(archive.solutions, bounds)
    pool = np.concatenate([sample, nbrs]) if len(nbrs) else sample
    return np.unique(pool, axis=0)


def run(problem: ProblemDefinition, config: OptimizerConfig = OptimizerConfig(),
        on_record: Optional[Callable[[dict], None]] = None) -> OptimizationResult:
    """Run the optimizer until convergence, budget exhaustion or an empty pool."""
    clock = time.perf_counter
    phase_times: Dict[str, float] = {}
    bounds = problem.bounds
    use_full = (config.candidate_pool == "full-lattice"
                and problem.lattice_size <= FULL_LATTICE_LIMIT) \
        or problem.lattice_size <= config.pool_size
    full = lattice(bounds) if use_full else None

    evaluations: List[EvaluationEntry] = []
    log: List[dict] = []
    evaluated: Dict[BlockSpec, EvaluationEntry] = {}

    def evaluate(decision: BlockSpec, iteration: int, phase: Phase) -> EvaluationEntry:
        spec = problem.expand(decision)
        try:
            pair = eval_objectives(problem, decision)
            entry = EvaluationEntry(iteration, phase, decision, spec, pair)
        except EvaluationError as exc:
            entry = EvaluationEntry(iteration, phase, decision, spec, None, str(exc))
        evaluations.append(entry)
        evaluated[decision] = entry
        return entry

    def emit(record: dict) -> None:
        log.append(record)
        if on_record is not None:
            on_record(record)

    def base_record(entry: EvaluationEntry, t: int, phase: Phase, r) -> dict:
        return {
            "iteration": entry.iteration,
            "t": t,
            "phase": phase.value,
            "reference": [r[0], r[1]],
            "decision": list(entry.decision),
            "spec": list(entry.spec),
            "m": int(np.prod(entry.spec)),
            "f1": entry.pair.f1 if entry.feasible else None,
            "f2": entry.pair.f2 if entry.feasible else None,
            "error": entry.error,
        }

    # initialization
    start = clock()
    r = (0.0, 0.0)
    for decision in initial_design(bounds, config.init_points, config.seed):
        entry = evaluate(decision, 0, Phase.INIT)
        emit(base_record(entry, 0, Phase.INIT, r))
    phase_times[Phase.INIT.value] = clock() - start
    iteration_times: List[float] = []

    archive = ParetoArchive(r)
    phase = Phase.REFERENCE_PLACEMENT
    trajectory: List[float] = []
    iteration = 0
    stop = None
    halton_seed = config.seed + 1

    while stop is None:
        if iteration >= config.max_iterations:
            stop = Phase.BUDGET_EXHAUSTED
            break
        if len(evaluated) >= problem.lattice_size:
            stop = Phase.POOL_EXHAUSTED
            break
        iteration += 1
        tick = clock()
        feasible = [e for e in evaluations if e.feasible]
        models = None
        if len(feasible) < 2:
            # not enough data for a surrogate: keep filling space
            nxt = initial_design(bounds, 1, halton_seed + iteration, exclude=list(evaluated))
            choice = CandidateChoice(nxt[0], 0.0, True)
        else:
            X = [e.decision for e in feasible]
            gp_seed = config.seed * 7919 + iteration
            try:
                m1 = gp.fit(X, [e.pair.f1 for e in feasible], bounds,
                            gp.GPOptions(restarts=config.gp_restarts, seed=gp_seed))
                m2 = gp.fit(X, [e.pair.f2 for e in feasible], bounds,
                            gp.GPOptions(restarts=config.gp_restarts, seed=gp_seed + 1))
            except gp.GPError as exc:
                raise OptimizationError(f"GP fit failed at iteration {iteration}: {exc}", {
                    "iteration": iteration, "reference": r, "phase": phase.value,
                    "evaluated": [e.decision for e in evaluations]}) from exc
            models = (m1, m2)
            ctx = AcquisitionContext(m1, m2, tuple(archive.points), r)
            pool = _candidate_pool(problem, config, full, archive, iteration)
            try:
                choice = select_candidate(ctx, pool, list(evaluated), bounds)
            except OptimizationError:
                stop = Phase.POOL_EXHAUSTED
                break

        entry = evaluate(choice.decision, iteration, phase)
        record_phase = phase
        gain = None
        evicted: Tuple = ()
        if entry.feasible:
            point = entry.pair.point
            if phase is Phase.REFERENCE_PLACEMENT:
                gain = hvi([], r, point)
                if not gain > 0:
                    r = update_reference_point(r, point, config.growth_factor)
                else:
                    archive = ParetoArchive(r)
                    report = archive.insert(entry.decision, point)
                    entry.offered, entry.added = True, report.added
                    trajectory = [0.0, archive.hypervolume()]
                    phase = Phase.OPTIMIZATION
            else:
                report = archive.insert(entry.decision, point)
                entry.offered, entry.added = True, report.added
                gain, evicted = report.hvi, report.evicted
                trajectory.append(archive.hypervolume())
        elif phase is Phase.OPTIMIZATION:
            trajectory.append(trajectory[-1])

        c_eps, converged = (check_convergence(trajectory, config.window, config.tolerance)
                            if phase is Phase.OPTIMIZATION else (None, False))
        t = len(trajectory) - 1 if phase is Phase.OPTIMIZATION else 1
        record = base_record(entry, t, record_phase, r)
        record.update({
            "hvi": gain,
            "hv": archive.hypervolume() if phase is Phase.OPTIMIZATION else 0.0,
            "c_eps": c_eps,
            "added": entry.added,
            "evicted": [list(s) for s in evicted],
            "ehvi": choice.ehvi,
            "fallback": choice.fallback,
            "gp_f1": models[0].to_record() if models else None,
            "gp_f2": models[1].to_record() if models else None,
        })
        emit(record)
        spent = clock() - tick
        iteration_times.append(spent)
        phase_times[record_phase.value] = phase_times.get(record_phase.value, 0.0) + spent
        logger.debug("iteration %d phase %s decision %s hv %s", iteration, record_phase.value,
                     entry.decision, record["hv"])
        if converged:
            stop = Phase.CONVERGED

    if not any(e.feasible for e in evaluations):
        raise OptimizationError("all candidates infeasible", {"evaluated": list(evaluated)})
    if phase is Phase.REFERENCE_PLACEMENT:
        archive = ParetoArchive(r)
    return OptimizationResult(
        archive=archive,
        reference=r,
        hv_trajectory=trajectory,
        evaluations=evaluations,
        log=log,
        iterations=iteration,
        stop_reason=stop,
        phase_times=phase_times,
        iteration_times=iteration_times,
    )
