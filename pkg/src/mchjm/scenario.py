"""Forecast distributions and confidence envelopes at a horizon of k steps.

Two routes produce the horizon distribution: closed-form Gaussian propagation
of the VAR(1) (mean/covariance recursion) and Monte Carlo path simulation,
either with Gaussian shocks or by resampling historical residual vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .dynamics import CurveSystem, ModelParams, StateVector, drift_from_params
from .spline import SplineOperators

__all__ = [
    "ForecastSpec",
    "ForecastEnvelope",
    "gaussian_moments",
    "simulate_paths",
    "envelope",
    "envelope_from_moments",
    "envelope_from_ensemble",
    "forecast_yields_moments",
    "forecast_yields_ensemble",
]

METHODS = ("gaussian-closed-form", "gaussian-mc", "bootstrap")
DRIFT_MODES = ("exact-recursion", "constant-drift")


@dataclass(frozen=True)
class ForecastSpec:
    horizon_steps: int = 1
    n_paths: int = 10_000
    coverage: tuple[float, ...] = (0.95, 0.99)
    method: str = "gaussian-closed-form"
    drift_mode: str = "exact-recursion"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.horizon_steps < 1:
            raise ValueError("horizon must be at least one step")
        if any(not 0.0 < p < 1.0 for p in self.coverage):
            raise ValueError("coverage levels must be in (0, 1)")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.drift_mode not in DRIFT_MODES:
            raise ValueError(f"drift_mode must be one of {DRIFT_MODES}")
        if self.method != "gaussian-closed-form" and self.n_paths < 2:
            raise ValueError("Monte Carlo methods need at least 2 paths")


@dataclass(frozen=True)
class ForecastEnvelope:
    """Per-bucket interval forecast [lower, upper] with mean and sd."""

    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    coverage: float
    method: str = ""
    # plot-only bands mirroring the mean +/- 2 sd display
    band2sd_lower: np.ndarray = field(default=None, compare=False)
    band2sd_upper: np.ndarray = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if np.any(self.lower > self.mean + 1e-12) or np.any(
            self.mean > self.upper + 1e-12
        ):
            raise ValueError("envelope must bracket the mean")
        if self.band2sd_lower is None:
            object.__setattr__(self, "band2sd_lower", self.mean - 2.0 * self.sd)
            object.__setattr__(self, "band2sd_upper", self.mean + 2.0 * self.sd)

    def contains(self, realized: np.ndarray) -> np.ndarray:
        r = np.asarray(realized, dtype=float)
        return (r >= self.lower) & (r <= self.upper)


def gaussian_moments(
    sys: CurveSystem,
    params: ModelParams,
    state: StateVector,
    k: int,
    drift_mode: str = "exact-recursion",
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the state k steps ahead.

    The covariance is dt * sum_h A^h Sigma Sigma^T (A^h)^T. In exact-recursion
    mode the drift accumulates through the transition, sum_h A^h mu dt; the
    constant-drift mode uses the simpler mu k dt form.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if drift_mode not in DRIFT_MODES:
        raise ValueError(f"drift_mode must be one of {DRIFT_MODES}")
    A = sys.full_transition_matrix()
    mu = drift_from_params(sys, params)
    sig = params.sigma()
    cov_step = sig @ sig.T * sys.dt

    cov = np.zeros_like(cov_step)
    drift_acc = np.zeros(sys.D)
    Ah = np.eye(sys.D)
    for _ in range(k):
        cov += Ah @ cov_step @ Ah.T
        drift_acc += Ah @ (mu * sys.dt)
        Ah = A @ Ah
    # Ah is now A^k
    if drift_mode == "constant-drift":
        mean = Ah @ state.values + mu * k * sys.dt
    else:
        mean = Ah @ state.values + drift_acc
    return mean, (cov + cov.T) / 2.0


def simulate_paths(
    sys: CurveSystem,
    params: ModelParams,
    state: StateVector,
    spec: ForecastSpec,
    W: np.ndarray | None = None,
    residual_pool: np.ndarray | None = None,
) -> np.ndarray:
    """n_paths terminal states after horizon_steps Euler steps.

    gaussian-mc draws fresh standard normals each step (through W when a
    PCA-reduced loading matrix is supplied); bootstrap resamples whole rows
    of the historical residual pool and advances y = mu dt + omega o eta
    sqrt(dt).
    """
    if spec.method == "gaussian-closed-form":
        raise ValueError("closed-form method has no paths; use gaussian_moments")
    rng = np.random.default_rng(spec.seed)
    A = sys.full_transition_matrix()
    mu = drift_from_params(sys, params)
    x = np.tile(state.values, (spec.n_paths, 1))
    sqdt = np.sqrt(sys.dt)

    if spec.method == "bootstrap":
        if residual_pool is None or len(residual_pool) == 0:
            raise ValueError("bootstrap forecasting needs a residual pool")
        pool = np.asarray(residual_pool, dtype=float)
        for _ in range(spec.horizon_steps):
            rows = rng.integers(0, pool.shape[0], size=spec.n_paths)
            y = mu * sys.dt + pool[rows] * params.omega * sqdt
            x = x @ A.T + y
        return x

    sig = params.sigma() if W is None else np.asarray(W, dtype=float)
    n_shocks = sig.shape[1]
    for _ in range(spec.horizon_steps):
        eps = rng.standard_normal((spec.n_paths, n_shocks))
        x = x @ A.T + mu * sys.dt + (eps @ sig.T) * sqdt
    return x


def envelope_from_moments(
    mean: np.ndarray, cov: np.ndarray, p: float, method: str = "gaussian-closed-form"
) -> ForecastEnvelope:
    """Closed-form Gaussian interval: mean +/- z_{(1+p)/2} sd per bucket."""
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    z = norm.ppf(0.5 * (1.0 + p))
    return ForecastEnvelope(
        lower=mean - z * sd, upper=mean + z * sd, mean=mean, sd=sd,
        coverage=p, method=method,
    )


def envelope_from_ensemble(
    ensemble: np.ndarray, p: float, method: str = "mc"
) -> ForecastEnvelope:
    """Empirical ((1-p)/2, (1+p)/2) quantiles per bucket."""
    ens = np.asarray(ensemble, dtype=float)
    n = ens.shape[0]
    if n < 20.0 / (1.0 - p):
        import logging

        logging.getLogger(__name__).warning(
            "%d paths is thin for coverage %.3f quantiles", n, p
        )
    lo = np.quantile(ens, 0.5 * (1.0 - p), axis=0)
    hi = np.quantile(ens, 0.5 * (1.0 + p), axis=0)
    mean = ens.mean(axis=0)
    sd = ens.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    # empirical quantiles of a degenerate/tiny ensemble may sit at the mean
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    return ForecastEnvelope(
        lower=lo, upper=hi, mean=mean, sd=sd, coverage=p, method=method
    )


def envelope(ensemble_or_moments, p: float, method: str = "") -> ForecastEnvelope:
    """Dispatch on a path ensemble (2-D array) or a (mean, cov) pair."""
    if isinstance(ensemble_or_moments, tuple):
        mean, cov = ensemble_or_moments
        return envelope_from_moments(mean, cov, p, method or "gaussian-closed-form")
    return envelope_from_ensemble(ensemble_or_moments, p, method or "mc")


def _yield_map(ops: SplineOperators) -> np.ndarray:
    return ops.P / ops.grid.s[:, None]


def forecast_yields_moments(
    mean: np.ndarray, cov: np.ndarray, ops: SplineOperators
) -> tuple[np.ndarray, np.ndarray]:
    """Linear-map transform of discount-block forward moments to ZC yields."""
    K = len(ops.grid)
    if mean.shape[0] < K or cov.shape[0] < K:
        raise ValueError("moments do not cover the discount block")
    T = _yield_map(ops)
    return T @ mean[:K], T @ cov[:K, :K] @ T.T


def forecast_yields_ensemble(ensemble: np.ndarray, ops: SplineOperators) -> np.ndarray:
    """Path-wise transform of discount-block forward paths to ZC yields."""
    K = len(ops.grid)
    if ensemble.shape[1] < K:
        raise ValueError("ensemble does not cover the discount block")
    return ensemble[:, :K] @ _yield_map(ops).T
