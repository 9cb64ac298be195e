"""Comparison strategies scored with the same objective pipeline as the optimizer.

Full enumeration, uniform random sampling without replacement and a
structured grid. Each produces a :class:`BaselineRun`; hypervolume is always
computed against a reference point supplied from outside (normally the one
the optimizer settled on), since none of these strategies defines its own.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .objectives import BlockSpec, EvaluationError, ObjectivePair, ProblemDefinition, eval_objectives
from .pareto import hypervolume_2d, nondominated

__all__ = [
    "Strategy",
    "BaselineRecord",
    "BaselineRun",
    "BaselineError",
    "EnumerationCapError",
    "ComparisonError",
    "ComparisonRow",
    "enumerate_all",
    "random_baseline",
    "structured_grid",
    "structured_points",
    "grid_counts",
    "compare_hv",
    "ENUMERATION_CAP",
]

ENUMERATION_CAP = 100_000


class Strategy(str, Enum):
    ENUMERATION = "enumeration"
    RANDOM = "random"
    STRUCTURED = "structured"
    MOBO = "mobo"


class BaselineError(ValueError):
    pass


class EnumerationCapError(BaselineError):
    pass


class ComparisonError(ValueError):
    """Runs scored against different reference points cannot be compared."""


@dataclass(frozen=True)
class BaselineRecord:
    decision: BlockSpec
    spec: BlockSpec
    pair: Optional[ObjectivePair]
    error: Optional[str] = None
    elapsed: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.pair is not None


@dataclass
class BaselineRun:
    strategy: Strategy
    records: List[BaselineRecord]
    budget: int
    reference: Optional[Tuple[float, float]] = None
    seed: Optional[int] = None
    wall_time: float = 0.0

    def with_reference(self, r: Sequence[float]) -> "BaselineRun":
        return replace(self, reference=(float(r[0]), float(r[1])))

    def _ref(self, r) -> Tuple[float, float]:
        r = r if r is not None else self.reference
        if r is None:
            raise BaselineError("no reference point given for hypervolume")
        return float(r[0]), float(r[1])

    def feasible_records(self) -> List[BaselineRecord]:
        return [rec for rec in self.records if rec.feasible]

    def points(self) -> np.ndarray:
        pts = [rec.pair.point for rec in self.records if rec.feasible]
        return np.asarray(pts, dtype=np.float64).reshape(-1, 2)

    def front(self) -> List[BaselineRecord]:
        """Non-dominated feasible records, ordered by f1."""
        feas = self.feasible_records()
        idx = nondominated([rec.pair.point for rec in feas])
        rows = [feas[i] for i in idx]
        return sorted(rows, key=lambda rec: (rec.pair.f1, rec.pair.f2))

    def hypervolume(self, r: Optional[Sequence[float]] = None) -> float:
        return hypervolume_2d(self.points(), self._ref(r))

    def hv_trajectory(self, r: Optional[Sequence[float]] = None) -> List[float]:
        """HV after each evaluation, in evaluation order (infeasible steps repeat)."""
        ref = self._ref(r)
        out, seen = [], []
        for rec in self.records:
            if rec.feasible:
                seen.append(rec.pair.point)
            out.append(hypervolume_2d(seen, ref) if seen else 0.0)
        return out

    def cumulative_time(self) -> List[float]:
        return [float(x) for x in np.cumsum([rec.elapsed for rec in self.records])]


def _evaluate_one(problem: ProblemDefinition, decision: BlockSpec) -> BaselineRecord:
    spec = problem.expand(decision)
    start = time.perf_counter()
    try:
        pair = eval_objectives(problem, decision)
        return BaselineRecord(decision, spec, pair, None, time.perf_counter() - start)
    except EvaluationError as exc:
        return BaselineRecord(decision, spec, None, str(exc), time.perf_counter() - start)


def _evaluate(problem: ProblemDefinition, decisions: Sequence[BlockSpec], workers: int,
              cold_cache: bool) -> Tuple[List[BaselineRecord], float]:
    if cold_cache:
        problem.clear_cache()
    start = time.perf_counter()
    if workers <= 1 or len(decisions) < 2:
        records = [_evaluate_one(problem, d) for d in decisions]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map preserves input order, which is the canonical order here
            records = list(pool.map(lambda d: _evaluate_one(problem, d), decisions))
    return records, time.perf_counter() - start


def _all_decisions(bounds: Sequence[int]) -> List[BlockSpec]:
    return list(itertools.product(*[range(1, u + 1) for u in bounds]))


def enumerate_all(problem: ProblemDefinition, cap: int = ENUMERATION_CAP, workers: int = 1,
                  cold_cache: bool = False) -> BaselineRun:
    """Evaluate every decision in the box; the run's front is the exact one."""
    size = problem.lattice_size
    if size > cap:
        raise EnumerationCapError(
            f"enumeration of {size} decisions exceeds the cap of {cap}")
    records, elapsed = _evaluate(problem, _all_decisions(problem.bounds), workers, cold_cache)
    return BaselineRun(Strategy.ENUMERATION, records, size, wall_time=elapsed)


def random_baseline(problem: ProblemDefinition, budget: int, seed: int, workers: int = 1,
                    cold_cache: bool = False) -> BaselineRun:
    """``budget`` distinct decisions drawn uniformly, evaluated in draw order."""
    if budget < 1:
        raise BaselineError("budget must be at least 1")
    size = problem.lattice_size
    if budget > size:
        raise BaselineError(f"budget {budget} exceeds the {size} admissible decisions")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(size, size=budget, replace=False)
    coords = np.stack(np.unravel_index(idx, problem.bounds), axis=1) + 1
    decisions = [tuple(int(v) for v in row) for row in coords]
    records, elapsed = _evaluate(problem, decisions, workers, cold_cache)
    return BaselineRun(Strategy.RANDOM, records, budget, seed=seed, wall_time=elapsed)


def grid_counts(budget: int, ndim: int) -> Tuple[int, ...]:
    """Levels per dimension for a structured grid of at least ``budget`` points.

    An exact factorization is used when one exists whose largest and smallest
    factors are within a factor of two (75 in 3-D gives 5x5x3); otherwise the
    smallest near-cubic grid, levels differing by at most one, that holds the
    budget (67 in 2-D gives 8x9).
    """
    if budget < 1:
        raise BaselineError("budget must be at least 1")
    if ndim == 1:
        return (budget,)
    best = None
    for combo in _factorizations(budget, ndim):
        if max(combo) <= 2 * min(combo):
            score = (max(combo) - min(combo), sorted(combo, reverse=True))
            if best is None or score < best[0]:
                best = (score, tuple(sorted(combo, reverse=True)))
    if best is not None:
        return best[1]
    k = max(1, int(math.floor(budget ** (1.0 / ndim) + 1e-9)))
    counts = [k] * ndim
    j = ndim - 1
    while math.prod(counts) < budget:
        counts[j] += 1
        j = (j - 1) % ndim
    return tuple(counts)


def _factorizations(n: int, parts: int) -> Iterable[Tuple[int, ...]]:
    if parts == 1:
        yield (n,)
        return
    for f in range(1, n + 1):
        if n % f == 0:
            for rest in _factorizations(n // f, parts - 1):
                if f >= rest[0]:
                    yield (f,) + rest


def _levels(upper: int, count: int) -> List[int]:
    if count > upper:
        raise BaselineError(f"{count} levels do not fit in [1, {upper}]")
    step = max(upper // count, 1)
    lo = min(2, upper)
    if lo + step * (count - 1) > upper:
        lo = 1
    return [lo + step * i for i in range(count)]


def structured_points(bounds: Sequence[int], budget: int,
                      counts: Optional[Sequence[int]] = None) -> List[BlockSpec]:
    """Deterministic grid of exactly ``budget`` decisions in lexicographic order.

    Levels along axis ``j`` start at 2 and step by ``U_j // c_j``. Surplus grid
    points are dropped corners first, then the center point, then the
    lexicographically largest remaining points.
    """
    bounds = tuple(int(u) for u in bounds)
    if budget < 1:
        raise BaselineError("budget must be at least 1")
    if budget > math.prod(bounds):
        raise BaselineError(f"budget {budget} exceeds the {math.prod(bounds)} admissible decisions")
    counts = tuple(counts) if counts is not None else grid_counts(budget, len(bounds))
    if len(counts) != len(bounds):
        raise BaselineError(f"need {len(bounds)} level counts, got {len(counts)}")
    if math.prod(counts) < budget:
        raise BaselineError(f"grid {counts} holds fewer than {budget} points")
    axes = [_levels(u, c) for u, c in zip(bounds, counts)]
    grid = list(itertools.product(*axes))
    surplus = len(grid) - budget
    if surplus:
        corners = sorted(set(itertools.product(*[(a[0], a[-1]) for a in axes])))
        center = tuple(a[(len(a) - 1) // 2] for a in axes)
        order = corners + [center] + sorted(grid, reverse=True)
        drop = []
        for p in order:
            if p not in drop:
                drop.append(p)
            if len(drop) == surplus:
                break
        dropped = set(drop)
        grid = [p for p in grid if p not in dropped]
    return grid


def structured_grid(problem: ProblemDefinition, budget: int,
                    counts: Optional[Sequence[int]] = None, workers: int = 1,
                    cold_cache: bool = False) -> BaselineRun:
    decisions = structured_points(problem.bounds, budget, counts)
    records, elapsed = _evaluate(problem, decisions, workers, cold_cache)
    return BaselineRun(Strategy.STRUCTURED, records, budget, wall_time=elapsed)


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    strategy: str
    evaluations: int
    final_hv: float
    pct_vs_mobo: float
    wall_time: float
    hv_trajectory: Tuple[float, ...] = field(default=(), compare=False)

    def to_record(self) -> dict:
        return {"name": self.name, "strategy": self.strategy, "evaluations": self.evaluations,
                "final_hv": self.final_hv, "pct_mobo_higher": self.pct_vs_mobo,
                "wall_time": self.wall_time}


def _pct_higher(mobo_hv: float, other: float) -> float:
    if other > 0:
        return 100.0 * (mobo_hv - other) / other
    return 0.0 if mobo_hv == 0 else math.inf


def compare_hv(runs: Sequence[BaselineRun], mobo, names: Optional[Sequence[str]] = None
               ) -> List[ComparisonRow]:
    """First row is the optimizer itself; then one row per run.

    ``pct_vs_mobo`` is how much higher the optimizer's final HV is, in percent
    of the run's HV. A run carrying a reference point other than the
    optimizer's is refused.
    """
    r = (float(mobo.reference[0]), float(mobo.reference[1]))
    names = list(names) if names is not None else [
        f"{run.strategy.value}-{i + 1}" for i, run in enumerate(runs)]
    if len(names) != len(runs):
        raise ValueError("one name per run required")
    for name, run in zip(names, runs):
        if run.reference is not None and tuple(map(float, run.reference)) != r:
            raise ComparisonError(
                f"run {name!r} uses reference {run.reference}, optimizer uses {r}")
    mobo_hv = mobo.archive.hypervolume() if len(mobo.archive) else 0.0
    rows = [ComparisonRow("mobo", Strategy.MOBO.value, len(mobo.evaluations), mobo_hv, 0.0,
                          float(sum(mobo.phase_times.values())), tuple(mobo.hv_trajectory))]
    for name, run in zip(names, runs):
        hv = run.hypervolume(r)
        rows.append(ComparisonRow(name, run.strategy.value, len(run.records), hv,
                                  _pct_higher(mobo_hv, hv), run.wall_time,
                                  tuple(run.hv_trajectory(r))))
    return rows
