"""Expected hypervolume improvement for two objectives.

With independent Gaussian predictions ``Y1 ~ N(m1, s1^2)``, ``Y2 ~ N(m2, s2^2)``
the region a candidate can add (inside ``[., r]``, outside the area already
dominated by the archive) splits into vertical strips over the sorted
archive. On strip ``i`` spanning ``[l_i, h_i]`` in the first objective under
the staircase height ``u_i``, the added area is
``(h_i - max(l_i, Y1))^+ * (u_i - Y2)^+``, whose expectation factorizes into
one-dimensional partial expectations ``psi(u) = E[(u - Y)^+]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import ndtr

from .gp import GPModel
from .pareto import hvi_many

__all__ = [
    "AcquisitionContext",
    "partial_expectation",
    "strips",
    "ehvi_gaussian",
    "ehvi_exact",
    "ehvi_exact_many",
    "ehvi_mc",
    "ehvi_mc_gaussian",
]

_INV_SQRT_2PI = 0.3989422804014327


def partial_expectation(u, mean, std) -> np.ndarray:
    """``E[(u - Y)^+]`` for ``Y ~ N(mean, std^2)``; exact limit at ``std == 0``."""
    u = np.asarray(u, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    diff = u - mean
    safe = np.where(std > 0, std, 1.0)
    t = diff / safe
    with np.errstate(invalid="ignore"):
        val = diff * ndtr(t) + safe * _INV_SQRT_2PI * np.exp(-0.5 * t * t)
    val = np.where(np.isneginf(u), 0.0, val)
    return np.where(std > 0, val, np.clip(diff, 0.0, None))


def strips(points, r: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Strip lower/upper edges in objective 1 and staircase heights, clipped to ``r``."""
    r1, r2 = float(r[0]), float(r[1])
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts):
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        f1 = pts[order, 0]
        f2 = np.minimum.accumulate(pts[order, 1])
    else:
        f1 = f2 = np.empty(0)
    lower = np.minimum(np.r_[-np.inf, f1], r1)
    upper = np.minimum(np.r_[f1, r1], r1)
    height = np.minimum(np.r_[r2, f2], r2)
    return lower, upper, height


def ehvi_gaussian(points, r: Sequence[float], mean1, std1, mean2, std2) -> np.ndarray:
    """Exact EHVI for arrays of independent Gaussian predictions."""
    mean1, std1, mean2, std2 = (np.atleast_1d(np.asarray(a, dtype=np.float64))
                                for a in (mean1, std1, mean2, std2))
    lower, upper, height = strips(points, r)
    m1, s1, m2, s2 = (a[:, None] for a in (mean1, std1, mean2, std2))
    width_term = partial_expectation(upper[None, :], m1, s1) - \
        partial_expectation(lower[None, :], m1, s1)
    height_term = partial_expectation(height[None, :], m2, s2)
    return np.clip(np.sum(width_term * height_term, axis=1), 0.0, None)


@dataclass(frozen=True)
class AcquisitionContext:
    model_f1: GPModel
    model_f2: GPModel
    points: Tuple[Tuple[float, float], ...]
    reference: Tuple[float, float]

    @classmethod
    def from_archive(cls, model_f1, model_f2, archive) -> "AcquisitionContext":
        return cls(model_f1, model_f2, tuple(archive.points), archive.reference)

    def posterior(self, specs) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m1, v1 = self.model_f1.predict_many(specs)
        m2, v2 = self.model_f2.predict_many(specs)
        return m1, np.sqrt(v1), m2, np.sqrt(v2)


def ehvi_exact_many(ctx: AcquisitionContext, specs, chunk: int = 20000) -> np.ndarray:
    specs = np.asarray(specs, dtype=np.float64).reshape(len(specs), -1)
    out = np.empty(len(specs))
    for lo in range(0, len(specs), chunk):
        m1, s1, m2, s2 = ctx.posterior(specs[lo:lo + chunk])
        out[lo:lo + chunk] = ehvi_gaussian(ctx.points, ctx.reference, m1, s1, m2, s2)
    return out


def ehvi_exact(ctx: AcquisitionContext, spec) -> float:
    return float(ehvi_exact_many(ctx, [spec])[0])


def ehvi_mc_gaussian(points, r, mean1, std1, mean2, std2, samples: int = 10**6,
                     seed: int = 0, batch: int = 250000) -> Tuple[float, float]:
    """Monte-Carlo mean and standard error of HVI under Gaussian predictions."""
    if samples < 1000:
        raise ValueError("Monte-Carlo oracle needs at least 1000 samples")
    if std1 == 0 and std2 == 0:
        # every draw is the same point
        return float(hvi_many(points, r, [[mean1, mean2]])[0]), 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        y = np.empty((k, 2))
        y[:, 0] = mean1 + std1 * rng.standard_normal(k)
        y[:, 1] = mean2 + std2 * rng.standard_normal(k)
        h = hvi_many(points, r, y)
        total += h.sum()
        total_sq += (h * h).sum()
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    return float(mean), float(np.sqrt(var / samples))


def ehvi_mc(ctx: AcquisitionContext, spec, samples: int = 10**6,
            seed: int = 0) -> Tuple[float, float]:
    m1, s1, m2, s2 = ctx.posterior(np.atleast_2d(np.asarray(spec, dtype=np.float64)))
    return ehvi_mc_gaussian(ctx.points, ctx.reference, float(m1[0]), float(s1[0]),
                            float(m2[0]), float(s2[0]), samples, seed)
