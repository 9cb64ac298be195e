"""Gumbel distribution: densities, point estimation, return levels and KS.

Estimation maximizes either the log-likelihood (MLE) or the log-posterior
under the Jeffreys prior ``pi(mu, sigma) ~ 1/sigma**2`` (MAP). Both are solved
by damped Newton iterations on ``(mu, log sigma)`` using the analytic gradient
and Hessian, started from the method-of-moments estimate.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

__all__ = [
    "EULER_GAMMA",
    "EstimationError",
    "DegenerateSampleError",
    "GumbelParams",
    "MaximaSample",
    "Estimator",
    "SolverOptions",
    "FitReport",
    "cdf",
    "sf",
    "pdf",
    "log_likelihood",
    "log_posterior_jeffreys",
    "moment_init",
    "fit_mle",
    "fit_map",
    "fit",
    "return_level",
    "ks_statistic",
]

EULER_GAMMA = 0.57721566490153286061


class EstimationError(ArithmeticError):
    """Parameter estimation could not produce a valid fit."""


class DegenerateSampleError(EstimationError):
    """Sample has zero spread, so the scale would collapse to 0."""


@dataclass(frozen=True)
class GumbelParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")


class MaximaSample:
    """Block maxima ``x_1..x_m``; ``block_count`` is ``m``."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ValueError("maxima sample must be non-empty")
        arr.flags.writeable = False
        self.values = arr

    @property
    def block_count(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.block_count

    def __repr__(self):
        return f"MaximaSample(m={self.block_count})"


SampleLike = Union[MaximaSample, Sequence[float], np.ndarray]


def _values(sample: SampleLike) -> np.ndarray:
    if isinstance(sample, MaximaSample):
        return sample.values
    return MaximaSample(sample).values


class Estimator(str, Enum):
    MLE = "MLE"
    MAP = "MAP"


@dataclass(frozen=True)
class SolverOptions:
    # tolerance on the per-observation gradient in standardized coordinates
    gtol: float = 1e-8
    max_iter: int = 500


@dataclass(frozen=True)
class FitReport:
    params: GumbelParams
    method: Estimator
    log_objective_at_optimum: float
    iterations: int
    converged: bool
    gradient_norm: float

    def to_record(self) -> dict:
        return {
            "mu": self.params.mu,
            "sigma": self.params.sigma,
            "method": self.method.value,
            "log_objective": self.log_objective_at_optimum,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
        }


def cdf(params: GumbelParams, x):
    z = (np.asarray(x, dtype=np.float64) - params.mu) / params.sigma
    return np.exp(-np.exp(-z))


def sf(params: GumbelParams, x):
    """Survival function ``1 - cdf``, accurate in the upper tail."""
    z = (np.asarray(x, dtype=np.float64) - params.mu) / params.sigma
    return -np.expm1(-np.exp(-z))


def pdf(params: GumbelParams, x):
    z = (np.asarray(x, dtype=np.float64) - params.mu) / params.sigma
    return np.exp(-z - np.exp(-z)) / params.sigma


def _log_objective(x: np.ndarray, mu: float, sigma: float, prior_power: int) -> float:
    z = (x - mu) / sigma
    with np.errstate(over="ignore"):
        # overflow only at absurd sigma, where -inf is the right answer
        return float(-(x.size + prior_power) * math.log(sigma) - z.sum() - np.exp(-z).sum())


def log_likelihood(params: GumbelParams, sample: SampleLike) -> float:
    """``-m log(sigma) - sum(z) - sum(exp(-z))`` with ``z = (x - mu) / sigma``."""
    return _log_objective(_values(sample), params.mu, params.sigma, 0)


def log_posterior_jeffreys(params: GumbelParams, sample: SampleLike) -> float:
    """Unnormalized log-posterior: log-likelihood plus ``-2 log(sigma)``."""
    return _log_objective(_values(sample), params.mu, params.sigma, 2)


def moment_init(sample: SampleLike) -> GumbelParams:
    x = _values(sample)
    if x.size < 2:
        raise DegenerateSampleError("moment initialization needs at least 2 values")
    s = float(np.std(x, ddof=1))
    if not s > 0:
        raise DegenerateSampleError("sample has zero variance")
    sigma0 = s * math.sqrt(6.0) / math.pi
    return GumbelParams(float(np.mean(x)) - EULER_GAMMA * sigma0, sigma0)


def _derivatives(z: np.ndarray, sigma: float, prior_power: int):
    """Objective with its first and second derivatives w.r.t. ``(mu, log sigma)``."""
    m = z.size
    e = np.exp(-z)
    s0 = e.sum()
    s1 = z.sum()
    t1 = (z * e).sum()
    t2 = (z * z * e).sum()
    value = -(m + prior_power) * math.log(sigma) - s1 - s0
    grad = np.array([(m - s0) / sigma, -(m + prior_power) + s1 - t1])
    h_mm = -s0 / sigma**2
    h_me = -(m - s0) / sigma - t1 / sigma
    h_ee = -s1 + t1 - t2
    hess = np.array([[h_mm, h_me], [h_me, h_ee]])
    return value, grad, hess


def _newton(x: np.ndarray, prior_power: int, opts: SolverOptions):
    m = x.size
    # standardize so tolerances are scale free; the objective changes by a constant
    center = float(np.mean(x))
    scale = float(np.std(x, ddof=1))
    u = (x - center) / scale
    init = moment_init(u)
    theta = np.array([init.mu, math.log(init.sigma)])

    def evaluate(th):
        sigma = math.exp(th[1])
        z = (u - th[0]) / sigma
        with np.errstate(over="ignore", invalid="ignore"):
            return _derivatives(z, sigma, prior_power)

    value, grad, hess = evaluate(theta)
    # gradient of the mean objective w.r.t. (mu, log sigma) in standardized units
    gnorm = float(np.linalg.norm(grad)) / m
    iterations = 0
    while gnorm > opts.gtol and iterations < opts.max_iter:
        iterations += 1
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad / m
        if not np.all(np.isfinite(step)) or step @ grad <= 0:
            # Hessian not negative definite here: fall back to scaled ascent
            step = grad / m
        alpha = 1.0
        while alpha > 1e-12:
            trial = theta + alpha * step
            t_value, t_grad, t_hess = evaluate(trial)
            if math.isfinite(t_value) and t_value >= value - 1e-12 * abs(value):
                break
            alpha *= 0.5
        else:
            break
        theta, value, grad, hess = trial, t_value, t_grad, t_hess
        gnorm = float(np.linalg.norm(grad)) / m
    converged = bool(gnorm <= opts.gtol)
    mu = center + scale * float(theta[0])
    sigma = scale * math.exp(float(theta[1]))
    return GumbelParams(mu, sigma), iterations, converged, gnorm


def fit(sample: SampleLike, method: Estimator = Estimator.MAP,
        opts: SolverOptions = SolverOptions()) -> FitReport:
    """Point estimate by MLE or Jeffreys-prior MAP.

    Raises :class:`DegenerateSampleError` for fewer than 2 values or a
    constant sample. Non-convergence is reported via ``converged=False``.
    """
    method = Estimator(method)
    x = _values(sample)
    if x.size < 2:
        raise DegenerateSampleError(f"need at least 2 block maxima, got {x.size}")
    if not np.ptp(x) > 0 or not float(np.std(x, ddof=1)) > 0:
        raise DegenerateSampleError("constant sample: scale would collapse to 0")
    prior_power = 2 if method is Estimator.MAP else 0
    params, iterations, converged, gnorm = _newton(x, prior_power, opts)
    return FitReport(
        params=params,
        method=method,
        log_objective_at_optimum=_log_objective(x, params.mu, params.sigma, prior_power),
        iterations=iterations,
        converged=converged,
        gradient_norm=gnorm,
    )


def fit_mle(sample: SampleLike, opts: SolverOptions = SolverOptions()) -> FitReport:
    return fit(sample, Estimator.MLE, opts)


def fit_map(sample: SampleLike, opts: SolverOptions = SolverOptions()) -> FitReport:
    return fit(sample, Estimator.MAP, opts)


def return_level(params: GumbelParams, m) -> float:
    """Level exceeded with probability ``1/m``.

    ``mu - sigma * log(log(m) - log(m - 1))``, evaluated via ``log1p`` so that
    large block counts keep full precision.
    """
    if m < 2:
        raise ValueError(f"return level needs m >= 2, got {m}")
    return params.mu - params.sigma * math.log(-math.log1p(-1.0 / m))


def ks_statistic(sample: SampleLike, params: GumbelParams) -> float:
    """Exact sup-distance between the fitted CDF and the sample EDF."""
    x = np.sort(_values(sample))
    m = x.size
    g = cdf(params, x)
    i = np.arange(1, m + 1, dtype=np.float64)
    d_plus = np.max(i / m - g)
    d_minus = np.max(g - (i - 1) / m)
    return float(min(1.0, max(d_plus, d_minus, 0.0)))


def params_record(params: GumbelParams) -> dict:
    return asdict(params)
