"""Bi-objective dominance and hypervolume, plus a non-dominated archive.

Both objectives are minimized. The hypervolume of a set w.r.t. a reference
point ``r`` is the area of the union of boxes ``[p, r]``; points with a
coordinate at or beyond ``r`` contribute only their (possibly empty) clipped
box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, List, Sequence, Tuple

import numpy as np

__all__ = [
    "dominates",
    "hypervolume_2d",
    "hvi",
    "hvi_many",
    "nondominated",
    "InsertReport",
    "ParetoArchive",
]

Point = Tuple[float, float]


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    return (a[0] <= b[0] and a[1] <= b[1]) and (a[0] < b[0] or a[1] < b[1])


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, 2))
    return arr.reshape(-1, 2)


def hypervolume_2d(points, r: Sequence[float]) -> float:
    """Exact dominated area by a sort-and-sweep over the first objective."""
    pts = _as_points(points)
    r1, r2 = float(r[0]), float(r[1])
    pts = pts[(pts[:, 0] < r1) & (pts[:, 1] < r2)]
    if len(pts) == 0:
        return 0.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    f1 = pts[order, 0]
    best_f2 = np.minimum.accumulate(pts[order, 1])
    # keep only staircase corners so equal fronts sum identical terms
    step = np.r_[True, best_f2[1:] < best_f2[:-1]]
    f1, best_f2 = f1[step], best_f2[step]
    widths = np.diff(np.append(f1, r1))
    return float(np.sum(widths * (r2 - best_f2)))


def hvi(points, r: Sequence[float], cand: Sequence[float]) -> float:
    """``HV(points + cand) - HV(points)``, evaluated without cancellation."""
    return float(hvi_many(points, r, np.asarray(cand, dtype=np.float64).reshape(1, 2))[0])


def hvi_many(points, r: Sequence[float], cands) -> np.ndarray:
    """Hypervolume improvement of each row of ``cands`` w.r.t. ``points``.

    For a candidate ``y`` the improvement is the area of ``[y, r]`` minus the
    part of that box already dominated, i.e. ``HV({max(p, y)}, r)``. The sweep
    is vectorized over candidates.
    """
    cands = _as_points(cands)
    r1, r2 = float(r[0]), float(r[1])
    y1, y2 = cands[:, 0], cands[:, 1]
    box = np.clip(r1 - y1, 0.0, None) * np.clip(r2 - y2, 0.0, None)
    pts = _as_points(points)
    if len(pts) == 0:
        return box
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    f1 = pts[order, 0]
    best_f2 = np.minimum.accumulate(pts[order, 1])
    # clip every archive point into the candidate's box (monotone, keeps order)
    c1 = np.minimum(np.maximum(f1[None, :], y1[:, None]), r1)
    c2 = np.minimum(np.maximum(best_f2[None, :], y2[:, None]), r2)
    nxt = np.concatenate([c1[:, 1:], np.full((len(cands), 1), r1)], axis=1)
    covered = np.sum((nxt - c1) * (r2 - c2), axis=1)
    gain = np.clip(box - covered, 0.0, None)
    # the improvement is exactly zero iff some archive point weakly dominates y;
    # enforce that instead of trusting the subtraction's rounding
    weak = np.any((pts[None, :, 0] <= y1[:, None]) & (pts[None, :, 1] <= y2[:, None]), axis=1)
    gain[weak] = 0.0
    return gain


def nondominated(points) -> np.ndarray:
    """Indices of the non-dominated rows (first occurrence kept among duplicates)."""
    pts = _as_points(points)
    keep = []
    for i, p in enumerate(pts):
        if any(dominates(q, p) for q in pts):
            continue
        if any(np.array_equal(pts[k], p) for k in keep):
            continue
        keep.append(i)
    return np.asarray(keep, dtype=int)


@dataclass(frozen=True)
class InsertReport:
    added: bool
    hvi: float
    evicted: Tuple[Hashable, ...] = ()


@dataclass
class ParetoArchive:
    """Non-dominated points paired with the solutions that produced them."""

    reference: Point
    points: List[Point] = field(default_factory=list)
    solutions: List[Hashable] = field(default_factory=list)

    def __post_init__(self):
        self.reference = (float(self.reference[0]), float(self.reference[1]))
        if self.reference[0] < 0 or self.reference[1] < 0:
            raise ValueError(f"reference point must be non-negative, got {self.reference}")

    def __len__(self):
        return len(self.points)

    def hypervolume(self) -> float:
        return hypervolume_2d(self.points, self.reference)

    def hvi(self, point: Sequence[float]) -> float:
        return hvi(self.points, self.reference, point)

    def insert(self, solution: Hashable, point: Sequence[float]) -> InsertReport:
        """Add ``point`` if it strictly improves hypervolume; evict what it dominates."""
        point = (float(point[0]), float(point[1]))
        gain = self.hvi(point)
        if not gain > 0:
            return InsertReport(False, gain)
        evicted = []
        kept_p, kept_s = [], []
        for p, s in zip(self.points, self.solutions):
            if dominates(point, p):
                evicted.append(s)
            else:
                kept_p.append(p)
                kept_s.append(s)
        self.points = kept_p + [point]
        self.solutions = kept_s + [solution]
        return InsertReport(True, gain, tuple(evicted))

    def sorted_rows(self) -> List[Tuple[Hashable, float, float]]:
        """``(solution, f1, f2)`` rows ordered by ``f1``."""
        rows = [(s, p[0], p[1]) for p, s in zip(self.points, self.solutions)]
        return sorted(rows, key=lambda row: (row[1], row[2]))

    def copy(self) -> "ParetoArchive":
        return ParetoArchive(self.reference, list(self.points), list(self.solutions))


def replay(reference: Point, entries: Iterable[Tuple[Hashable, Sequence[float]]]) -> ParetoArchive:
    """Rebuild an archive by inserting ``(solution, point)`` pairs in order."""
    archive = ParetoArchive(reference)
    for solution, point in entries:
        archive.insert(solution, point)
    return archive
