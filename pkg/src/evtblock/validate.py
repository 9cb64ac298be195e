"""Out-of-sample scoring of chosen block specifications on held-out domains."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .grid import GriddedDomain, generate_synthetic, global_max
from .gumbel import Estimator
from .objectives import BlockSpec, EvaluationError, ProblemDefinition, eval_objectives

__all__ = [
    "ValidationError",
    "SpecSummary",
    "ValidationReport",
    "out_of_sample",
    "synthetic_replications",
    "full_domain_problem",
    "REPORT_COLUMNS",
]


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class SpecSummary:
    spec: BlockSpec
    f1: Tuple[float, ...]
    f2: Tuple[float, ...]
    failures: Tuple[Tuple[int, str], ...]

    @property
    def count(self) -> int:
        return len(self.f1)

    @property
    def m(self) -> int:
        return int(math.prod(self.spec))

    def mean(self) -> Tuple[float, float]:
        if not self.count:
            return math.nan, math.nan
        return float(np.mean(self.f1)), float(np.mean(self.f2))

    def std(self) -> Tuple[Optional[float], Optional[float]]:
        """Unbiased standard deviations; ``None`` with fewer than two values."""
        if self.count < 2:
            return None, None
        return float(np.std(self.f1, ddof=1)), float(np.std(self.f2, ddof=1))


@dataclass(frozen=True)
class ValidationReport:
    rows: Tuple[SpecSummary, ...]
    replications: int

    def row(self, spec: Sequence[int]) -> SpecSummary:
        spec = tuple(int(d) for d in spec)
        for r in self.rows:
            if r.spec == spec:
                return r
        raise KeyError(spec)

    def to_csv(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            (m1, m2), (s1, s2) = r.mean(), r.std()
            writer.writerow(["x".join(map(str, r.spec)), r.m, _fmt(m1), _fmt(s1), _fmt(m2),
                             _fmt(s2), r.count, len(r.failures)])
        return buf.getvalue()


REPORT_COLUMNS = ("spec", "m", "mean_f1", "std_f1", "mean_f2", "std_f2", "replications",
                  "infeasible")


def _fmt(x: Optional[float]) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(x)


def _score(spec: BlockSpec, problem: ProblemDefinition):
    try:
        return eval_objectives(problem, spec).point
    except (EvaluationError, ValueError) as exc:
        return str(exc)


def out_of_sample(specs: Sequence[Sequence[int]], test_problems: Iterable[ProblemDefinition],
                  workers: int = 1) -> ValidationReport:
    """Score every spec on every test problem and aggregate per spec.

    Specs are full block-count vectors, applied to problems without coupling.
    Pairs that are infeasible or out of a problem's bounds are recorded by
    replication index and left out of the aggregates. ``test_problems`` may be
    a generator, so large replication studies never hold every domain at once.
    """
    specs = [tuple(int(d) for d in s) for s in specs]
    if not specs:
        raise ValidationError("no specs to validate")
    f1: Dict[BlockSpec, List[float]] = {s: [] for s in specs}
    f2: Dict[BlockSpec, List[float]] = {s: [] for s in specs}
    fails: Dict[BlockSpec, List[Tuple[int, str]]] = {s: [] for s in specs}
    count = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for k, problem in enumerate(test_problems):
            if problem.coupling is not None:
                raise ValidationError("validation expects uncoupled test problems")
            if pool is None:
                results = [_score(s, problem) for s in specs]
            else:
                results = list(pool.map(lambda s: _score(s, problem), specs))
            for s, res in zip(specs, results):
                if isinstance(res, str):
                    fails[s].append((k, res))
                else:
                    f1[s].append(res[0])
                    f2[s].append(res[1])
            count += 1
    finally:
        if pool is not None:
            pool.shutdown()
    if count == 0:
        raise ValidationError("no test problems given")
    rows = tuple(SpecSummary(s, tuple(f1[s]), tuple(f2[s]), tuple(fails[s])) for s in specs)
    return ValidationReport(rows, count)


def full_domain_problem(domain: GriddedDomain, estimator=Estimator.MAP) -> ProblemDefinition:
    """Problem fitted on the whole domain with ``q`` its own maximum.

    Bounds are the domain's shape, so any spec that fits the domain is admissible.
    """
    return ProblemDefinition(domain, global_max(domain), tuple(domain.shape),
                             estimator=Estimator(estimator))


def synthetic_replications(shape: Sequence[int], mean: float, stddev: float, count: int,
                           seed: int, build: Optional[Callable[[GriddedDomain], ProblemDefinition]]
                           = None) -> Iterable[ProblemDefinition]:
    """Lazily generate ``count`` i.i.d. Gaussian domains with seeds ``seed + i``."""
    build = build or full_domain_problem
    for i in range(count):
        yield build(generate_synthetic(tuple(shape), mean, stddev, seed + i))
