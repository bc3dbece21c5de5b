"""Coordinate-wise maximum-likelihood estimation of (lambda, omega, Gamma).

The parameter vector theta = (lambda block values, omega_1..omega_D) is
optimised one coordinate at a time with the correlation matrix frozen at its
previous sweep value; after each full sweep the residual correlation is
refreshed from the standardised residuals. Iteration stops when every theta
component and every correlation entry moves relatively less than gamma_tol.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import CurveSystem, LambdaBlocks, ModelParams, drift_from_params

__all__ = [
    "EstimationWindow",
    "EstimationResult",
    "residuals",
    "neg_log_likelihood",
    "fit",
    "bootstrap_errors",
]

logger = logging.getLogger(__name__)

OMEGA_BOUNDS = (1e-8, 10.0)
LAMBDA_BOUNDS = (-50.0, 50.0)


@dataclass(frozen=True)
class EstimationWindow:
    """L x D matrix of observed increments y(t_k) plus its generating system."""

    y_series: np.ndarray
    sys: CurveSystem

    def __post_init__(self) -> None:
        y = np.asarray(self.y_series, dtype=float)
        if y.ndim != 2 or y.shape[1] != self.sys.D:
            raise ValueError(f"y_series must be L x {self.sys.D}")
        if not np.all(np.isfinite(y)):
            raise ValueError("y_series contains non-finite entries")
        if y.shape[0] < self.sys.D + 1:
            logger.warning(
                "window length %d is short for dimension %d; estimates may be unstable",
                y.shape[0],
                self.sys.D,
            )
        object.__setattr__(self, "y_series", y)

    @property
    def L(self) -> int:
        return int(self.y_series.shape[0])

    @property
    def dt(self) -> float:
        return self.sys.dt


@dataclass
class EstimationResult:
    params: ModelParams
    neg_log_lik: float
    n_iters: int
    converged: bool
    theta_path: list[np.ndarray] = field(default_factory=list)
    std_errors: dict[str, np.ndarray] | None = None
    bias: dict[str, np.ndarray] | None = None
    n_boot: int = 0
    n_boot_failures: int = 0

    def theta(self) -> np.ndarray:
        return np.concatenate([self.params.lam_blocks, self.params.omega])

    def lambda_significance(self, n_sd: float = 2.0) -> np.ndarray | None:
        """Boolean flag per lambda block: |estimate| > n_sd * bootstrap error."""
        if self.std_errors is None:
            return None
        se = self.std_errors["lambda"]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.params.lam_blocks) > n_sd * se


def residuals(window: EstimationWindow, params: ModelParams) -> np.ndarray:
    """Standardised residuals eta_j(t_k) = (y_j - mu_j dt) / (omega_j sqrt(dt))."""
    if np.any(params.omega == 0.0):
        raise ValueError("omega must be nonzero")
    mu = drift_from_params(window.sys, params)
    return (window.y_series - mu * window.dt) / (params.omega * np.sqrt(window.dt))


def neg_log_likelihood(window: EstimationWindow, params: ModelParams) -> float:
    """Gaussian negative log-likelihood of the y series (ln dt constant omitted)."""
    eta = residuals(window, params)
    return _nll_from_eta(window, params.omega, params.gamma, eta)


def _nll_from_eta(
    window: EstimationWindow,
    omega: np.ndarray,
    gamma: np.ndarray,
    eta: np.ndarray,
    gamma_inv: np.ndarray | None = None,
    logdet: float | None = None,
) -> float:
    L, D = eta.shape
    if gamma_inv is None:
        sign, logdet = np.linalg.slogdet(gamma)
        if sign <= 0:
            raise np.linalg.LinAlgError("correlation matrix is singular")
        gamma_inv = np.linalg.inv(gamma)
    quad = float(((eta @ gamma_inv) * eta).sum())
    return (
        0.5 * L * D * np.log(2.0 * np.pi)
        + 0.5 * L * logdet
        + L * float(np.sum(np.log(omega)))
        + 0.5 * quad
    )


def pearson_initial_params(
    window: EstimationWindow, blocks: LambdaBlocks
) -> ModelParams:
    """lambda = 0, omega and Gamma at their sample (Pearson) estimates of y."""
    y = window.y_series
    omega = y.std(axis=0, ddof=1) / np.sqrt(window.dt)
    omega = np.clip(omega, OMEGA_BOUNDS[0], OMEGA_BOUNDS[1])
    gamma = np.corrcoef(y, rowvar=False)
    gamma = _valid_correlation(gamma)
    return ModelParams(
        omega=omega,
        gamma=gamma,
        lam_blocks=np.zeros(blocks.n_blocks),
        blocks=blocks,
    )


def _valid_correlation(gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    gamma = (gamma + gamma.T) / 2.0
    np.fill_diagonal(gamma, 1.0)
    return gamma


class _SweepObjective:
    """NLL as a function of one theta coordinate, everything else frozen.

    Caches the Cholesky of the frozen correlation so each scalar evaluation is
    one drift rebuild plus one L x D quadratic form.
    """

    def __init__(self, window: EstimationWindow, gamma: np.ndarray):
        self.window = window
        self.gamma = gamma
        sign, self.logdet = np.linalg.slogdet(gamma)
        if sign <= 0:
            raise np.linalg.LinAlgError("correlation matrix is singular")
        self.gamma_inv = np.linalg.inv(gamma)
        self.P = window.sys.stacked_P()
        self.PG = self.P * gamma  # Hadamard factor of the HJM drift
        self.R = np.linalg.cholesky(gamma)
        self.sqdt = np.sqrt(window.dt)

    def value(self, lam_blocks: np.ndarray, omega: np.ndarray, blocks: LambdaBlocks) -> float:
        lam = blocks.expand(lam_blocks)
        mu = omega * (self.PG @ omega) - omega * (self.R @ lam)
        eta = (self.window.y_series - mu * self.window.dt) / (omega * self.sqdt)
        return _nll_from_eta(
            self.window, omega, self.gamma, eta, self.gamma_inv, self.logdet
        )


def _minimize_coordinate(fun, x0: float, bounds: tuple[float, float]) -> tuple[float, float]:
    """Bounded 1-D minimisation; never accepts a value worse than x0."""
    f0 = fun(x0)
    res = minimize_scalar(fun, bounds=bounds, method="bounded",
                          options={"xatol": 1e-8})
    if res.fun <= f0:
        return float(res.x), float(res.fun)
    return x0, f0


def fit(
    window: EstimationWindow,
    blocks: LambdaBlocks,
    gamma_tol: float = 1e-4,
    max_iters: int = 200,
    init: ModelParams | None = None,
) -> EstimationResult:
    """Iterative coordinate-wise MLE starting from the Pearson initialisation.

    A warm start can be supplied through `init` (used by the bootstrap, where
    each replica sits close to the original fit).
    """
    params = init if init is not None else pearson_initial_params(window, blocks)
    lam_b = params.lam_blocks.copy()
    omega = params.omega.copy()
    rho = params.gamma.copy()
    theta_path = [np.concatenate([lam_b, omega])]

    converged = False
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        obj = _SweepObjective(window, rho)
        lam_prev, omega_prev, rho_prev = lam_b.copy(), omega.copy(), rho.copy()

        for b in range(blocks.n_blocks):
            def f(v, b=b):
                trial = lam_b.copy()
                trial[b] = v
                return obj.value(trial, omega, blocks)

            lam_b[b], _ = _minimize_coordinate(f, lam_b[b], LAMBDA_BOUNDS)

        for i in range(window.sys.D):
            def f(v, i=i):
                trial = omega.copy()
                trial[i] = v
                return obj.value(lam_b, trial, blocks)

            omega[i], _ = _minimize_coordinate(f, omega[i], OMEGA_BOUNDS)

        # refresh the residual correlation with the updated theta
        lam = blocks.expand(lam_b)
        mu = omega * (obj.PG @ omega) - omega * (obj.R @ lam)
        eta = (window.y_series - mu * window.dt) / (omega * np.sqrt(window.dt))
        Q = eta.T @ eta / window.L
        d = np.sqrt(np.diag(Q))
        rho = _valid_correlation(Q / np.outer(d, d))

        theta_path.append(np.concatenate([lam_b, omega]))
        if _relative_stop(
            np.concatenate([lam_prev, omega_prev]),
            np.concatenate([lam_b, omega]),
            gamma_tol,
        ) and _relative_stop(rho_prev.ravel(), rho.ravel(), gamma_tol):
            converged = True
            break

    params = ModelParams(omega=omega, gamma=rho, lam_blocks=lam_b, blocks=blocks)
    nll = neg_log_likelihood(window, params)
    if not converged:
        logger.warning("fit did not converge in %d sweeps", max_iters)
    return EstimationResult(
        params=params,
        neg_log_lik=nll,
        n_iters=n_iter,
        converged=converged,
        theta_path=theta_path,
    )


def _relative_stop(prev: np.ndarray, new: np.ndarray, tol: float) -> bool:
    scale = np.abs(prev)
    # the relative rule is undefined at zero; fall back to an absolute test
    absolute = scale < 1e-12
    diff = np.abs(new - prev)
    ok = np.where(absolute, diff < tol, diff < tol * scale)
    return bool(np.all(ok))


def rebuild_y_series(
    window: EstimationWindow, params: ModelParams, eta: np.ndarray
) -> np.ndarray:
    """Invert the residual map: y = mu dt + omega o eta sqrt(dt)."""
    mu = drift_from_params(window.sys, params)
    return mu * window.dt + eta * params.omega * np.sqrt(window.dt)


def bootstrap_errors(
    window: EstimationWindow,
    result: EstimationResult,
    n_boot: int = 500,
    seed: int = 0,
    gamma_tol: float = 1e-4,
    max_iters: int = 200,
    max_failure_fraction: float = 0.05,
) -> EstimationResult:
    """Residual-bootstrap standard errors for a converged fit.

    Rows of the fitted residual matrix are resampled with replacement, the y
    series is rebuilt with the fitted drift and volatilities, and the full
    fit is repeated per replica. Standard errors are per-parameter standard
    deviations across replicas; a bias larger than the standard error is
    flagged.
    """
    if not result.converged:
        raise ValueError("bootstrap requires a converged fit")
    rng = np.random.default_rng(seed)
    eta_hat = residuals(window, result.params)
    blocks = result.params.blocks

    lam_samples, omega_samples, gamma_samples = [], [], []
    failures = 0
    for _ in range(n_boot):
        rows = rng.integers(0, window.L, size=window.L)
        y_star = rebuild_y_series(window, result.params, eta_hat[rows])
        try:
            rep = fit(
                replace(window, y_series=y_star),
                blocks,
                gamma_tol=gamma_tol,
                max_iters=max_iters,
                init=result.params,
            )
        except (np.linalg.LinAlgError, ValueError):
            failures += 1
            continue
        lam_samples.append(rep.params.lam_blocks)
        omega_samples.append(rep.params.omega)
        gamma_samples.append(rep.params.gamma)

    if failures > max_failure_fraction * n_boot:
        raise RuntimeError(
            f"{failures}/{n_boot} bootstrap replicas failed to fit"
        )

    lam_arr = np.array(lam_samples)
    omega_arr = np.array(omega_samples)
    gamma_arr = np.array(gamma_samples)
    ddof = 1 if len(lam_samples) > 1 else 0
    std_errors = {
        "lambda": lam_arr.std(axis=0, ddof=ddof),
        "omega": omega_arr.std(axis=0, ddof=ddof),
        "gamma": gamma_arr.std(axis=0, ddof=ddof),
    }
    bias = {
        "lambda": lam_arr.mean(axis=0) - result.params.lam_blocks,
        "omega": omega_arr.mean(axis=0) - result.params.omega,
        "gamma": gamma_arr.mean(axis=0) - result.params.gamma,
    }
    for name in ("lambda", "omega"):
        flag = np.abs(bias[name]) > std_errors[name]
        if np.any(flag & (std_errors[name] > 0)):
            logger.warning(
                "bootstrap bias exceeds the standard error for %s components %s",
                name,
                np.nonzero(flag)[0].tolist(),
            )
    out = replace(result)
    out.std_errors = std_errors
    out.bias = bias
    out.n_boot = len(lam_samples)
    out.n_boot_failures = failures
    return out
