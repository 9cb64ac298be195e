"""Gaussian-process regression surrogate over integer decision vectors.

Inputs are mapped to ``[0, 1]`` per dimension with ``(D - 1) / (U - 1)``;
targets are standardized to zero mean and unit variance. The kernel is an ARD
squared-exponential with signal variance ``s2`` plus a white-noise term.
Hyperparameters maximize the log marginal likelihood (LML) via multi-start
L-BFGS-B in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

__all__ = [
    "GPError",
    "GPOptions",
    "Hyperparameters",
    "GPModel",
    "fit",
    "predict",
    "log_marginal_likelihood",
    "normalize_inputs",
]

LOG_2PI = math.log(2.0 * math.pi)


class GPError(RuntimeError):
    """Surrogate could not be fitted."""


@dataclass(frozen=True)
class Hyperparameters:
    lengthscales: Tuple[float, ...]
    signal_variance: float
    noise_variance: float

    def to_vector(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_vector(cls, theta) -> "Hyperparameters":
        v = np.exp(np.asarray(theta, dtype=np.float64))
        return cls(tuple(float(x) for x in v[:-2]), float(v[-2]), float(v[-1]))

    def to_record(self) -> dict:
        return {"lengthscales": list(self.lengthscales),
                "signal_variance": self.signal_variance,
                "noise_variance": self.noise_variance}


@dataclass(frozen=True)
class GPOptions:
    restarts: int = 8
    lengthscale_bounds: Tuple[float, float] = (1e-2, 1e2)
    signal_variance_bounds: Tuple[float, float] = (1e-2, 1e2)
    noise_bounds: Tuple[float, float] = (1e-6, 1.0)
    seed: int = 0
    # skip optimization and use these values (tests, diagnostics)
    fixed: Optional[Hyperparameters] = None
    max_jitter: float = 1e-2


def normalize_inputs(inputs, bounds: Sequence[int]) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    upper = np.asarray(bounds, dtype=np.float64)
    span = np.where(upper > 1, upper - 1.0, 1.0)
    return (x - 1.0) / span


def _sqdist(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = a / lengthscales
    b = b / lengthscales
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def _cholesky(K: np.ndarray, max_jitter: float) -> Tuple[np.ndarray, float]:
    jitter = 0.0
    while True:
        try:
            Kj = K if jitter == 0.0 else K + jitter * np.eye(len(K))
            return cholesky(Kj, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else 2.0 * jitter
            if jitter > max_jitter:
                raise GPError("kernel matrix not positive definite after jitter escalation")


def _nlml_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    """Negative LML and its gradient w.r.t. log hyperparameters."""
    n, d = X.shape
    ell = np.exp(theta[:d])
    s2 = math.exp(theta[d])
    noise = math.exp(theta[d + 1])
    diffs2 = [(X[:, j, None] - X[None, :, j]) ** 2 / ell[j] ** 2 for j in range(d)]
    Kf = s2 * np.exp(-0.5 * np.sum(diffs2, axis=0))
    K = Kf + noise * np.eye(n)
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((L, True), y)
    nlml = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * LOG_2PI
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty_like(theta)
    for j in range(d):
        grad[j] = -0.5 * np.sum(W * Kf * diffs2[j])
    grad[d] = -0.5 * np.sum(W * Kf)
    grad[d + 1] = -0.5 * noise * np.trace(W)
    return float(nlml), grad


@dataclass(frozen=True, eq=False)
class GPModel:
    """Fitted GP. Immutable; predictions are safe to run concurrently."""

    X: np.ndarray
    y_raw: np.ndarray
    bounds: Tuple[int, ...]
    hyper: Hyperparameters
    y_mean: float
    y_scale: float
    degenerate: bool
    lml: float
    chol: Optional[np.ndarray]
    alpha: Optional[np.ndarray]
    jitter: float = 0.0

    def standardize(self, y):
        return (np.asarray(y, dtype=np.float64) - self.y_mean) / self.y_scale

    def destandardize(self, z):
        return np.asarray(z, dtype=np.float64) * self.y_scale + self.y_mean

    @property
    def prior_variance(self) -> float:
        return self.hyper.signal_variance * self.y_scale ** 2

    def to_record(self) -> dict:
        rec = self.hyper.to_record()
        rec.update(lml=self.lml, degenerate=self.degenerate)
        return rec

    def predict_many(self, inputs, chunk: int = 20000) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance (objective units) for each input row."""
        Xq = normalize_inputs(inputs, self.bounds)
        n = len(Xq)
        if self.degenerate:
            return np.full(n, self.y_mean), np.full(n, self.prior_variance)
        ell = np.asarray(self.hyper.lengthscales)
        s2 = self.hyper.signal_variance
        mean = np.empty(n)
        var = np.empty(n)
        for lo in range(0, n, chunk):
            q = Xq[lo:lo + chunk]
            Ks = s2 * np.exp(-0.5 * _sqdist(q, self.X, ell))
            mean[lo:lo + chunk] = Ks @ self.alpha
            v = solve_triangular(self.chol, Ks.T, lower=True)
            var[lo:lo + chunk] = s2 - np.sum(v * v, axis=0)
        var = np.where((var < 0) & (var > -1e-12), 0.0, var)
        var = np.maximum(var, 0.0)
        return self.destandardize(mean), var * self.y_scale ** 2


def log_marginal_likelihood(model: GPModel, hyper: Optional[Hyperparameters] = None) -> float:
    """LML of the model's standardized targets under ``hyper`` (default: fitted)."""
    hyper = hyper or model.hyper
    nlml, _ = _nlml_and_grad(hyper.to_vector(), model.X, model.standardize(model.y_raw))
    return -nlml


def fit(inputs, targets, bounds: Sequence[int], opts: GPOptions = GPOptions()) -> GPModel:
    """Fit a GP to integer decision vectors ``inputs`` and scalar ``targets``."""
    bounds = tuple(int(u) for u in bounds)
    raw = np.asarray(inputs, dtype=np.float64).reshape(-1, len(bounds))
    y = np.asarray(targets, dtype=np.float64).ravel()
    n, d = raw.shape
    if n < 2:
        raise GPError(f"need at least 2 training points, got {n}")
    if len(y) != n:
        raise GPError("inputs and targets differ in length")
    if len(np.unique(raw, axis=0)) != n:
        raise GPError("duplicate training inputs")
    X = normalize_inputs(raw, bounds)
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 0:
        hyper = opts.fixed or Hyperparameters((1.0,) * d, 1.0, opts.noise_bounds[0])
        return GPModel(X, y, bounds, hyper, y_mean, 1.0, True, float("nan"), None, None)
    z = (y - y_mean) / y_std

    if opts.fixed is not None:
        best = opts.fixed.to_vector()
    else:
        lo = np.r_[[math.log(opts.lengthscale_bounds[0])] * d,
                   math.log(opts.signal_variance_bounds[0]), math.log(opts.noise_bounds[0])]
        hi = np.r_[[math.log(opts.lengthscale_bounds[1])] * d,
                   math.log(opts.signal_variance_bounds[1]), math.log(opts.noise_bounds[1])]
        rng = np.random.Generator(np.random.PCG64(opts.seed))
        starts = [np.r_[[math.log(0.2)] * d, 0.0, math.log(1e-3)]]
        starts += list(rng.uniform(lo, hi, size=(max(opts.restarts - 1, 0), d + 2)))
        best, best_val = None, math.inf
        for x0 in starts:
            res = minimize(_nlml_and_grad, x0, args=(X, z), jac=True, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)))
            if res.fun < best_val:
                best, best_val = res.x, float(res.fun)
        if best is None or not math.isfinite(best_val) or best_val >= 1e24:
            raise GPError("marginal likelihood optimization failed")
    hyper = Hyperparameters.from_vector(best)
    ell = np.asarray(hyper.lengthscales)
    K = hyper.signal_variance * np.exp(-0.5 * _sqdist(X, X, ell))
    K[np.diag_indices(n)] += hyper.noise_variance
    L, jitter = _cholesky(K, opts.max_jitter)
    alpha = cho_solve((L, True), z)
    lml = -_nlml_and_grad(best, X, z)[0]
    return GPModel(X, y, bounds, hyper, y_mean, y_std, False, lml, L, alpha, jitter)


def predict(model: GPModel, spec) -> Tuple[float, float]:
    mean, var = model.predict_many(np.atleast_2d(np.asarray(spec, dtype=np.float64)))
    return float(mean[0]), float(var[0])
