"""Discrete VAR(1) representation of the joint multi-curve dynamics.

The state stacks the discounting-curve instantaneous forwards (K buckets)
with one FRA vector per tenor curve (K_tenor buckets each), total dimension
D. Each block advances as

    x(t+dt) = (I + M dt) x(t) + mu dt + Sigma eps sqrt(dt)

with M the spline derivative operator of the block's grid and the drift
coupling every block to the discounting-curve volatilities through the
integral operators.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .grids import BucketGrid
from .spline import SplineOperators, build_cross_integral_matrix

__all__ = ["CurveSystem", "LambdaBlocks", "ModelParams", "StateVector"]

logger = logging.getLogger(__name__)

SPECTRAL_RADIUS_WARN = 1.05


@dataclass(frozen=True)
class CurveSystem:
    """Grids, spline operators and time step of one multi-curve model."""

    discount_grid: BucketGrid
    tenor_specs: tuple[tuple[float, BucketGrid], ...]
    dt: float = 1.0 / 52.0

    spline: tuple[SplineOperators, ...] = field(init=False, compare=False)
    cross_P: tuple[np.ndarray, ...] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        specs = tuple(self.tenor_specs)
        object.__setattr__(self, "tenor_specs", specs)
        for tenor, grid in specs:
            if tenor <= 0.0:
                raise ValueError("tenor must be positive")
            if np.any(grid.s < tenor - 1e-12):
                raise ValueError("tenor grid buckets must all be >= the tenor")
        ops = [SplineOperators.build(self.discount_grid)]
        ops += [SplineOperators.build(g) for _, g in specs]
        cross = tuple(
            build_cross_integral_matrix(self.discount_grid, g) for _, g in specs
        )
        object.__setattr__(self, "spline", tuple(ops))
        object.__setattr__(self, "cross_P", cross)
        rho = max(
            np.abs(np.linalg.eigvals(np.eye(len(o.grid)) + o.M * self.dt)).max()
            for o in self.spline
        )
        logger.info("transition spectral radius %.6f (dt=%g)", rho, self.dt)
        if rho > SPECTRAL_RADIUS_WARN:
            logger.warning(
                "transition spectral radius %.4f exceeds %.2f; "
                "long-horizon propagation may be unstable",
                rho,
                SPECTRAL_RADIUS_WARN,
            )

    @property
    def K(self) -> int:
        return len(self.discount_grid)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return (self.K,) + tuple(len(g) for _, g in self.tenor_specs)

    @property
    def D(self) -> int:
        return int(sum(self.block_sizes))

    def block_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def transition_matrix(self, block: int | str = "discount") -> np.ndarray:
        """I + M dt for one block (0 / 'discount' or 1-based tenor index)."""
        if block in ("discount", 0):
            ops = self.spline[0]
        elif isinstance(block, int) and 1 <= block <= len(self.tenor_specs):
            ops = self.spline[block]
        else:
            raise ValueError(f"unknown block {block!r}")
        return np.eye(len(ops.grid)) + ops.M * self.dt

    def full_transition_matrix(self) -> np.ndarray:
        """Block-diagonal D x D transition over all curves."""
        return linalg.block_diag(
            *[self.transition_matrix(i) for i in range(len(self.spline))]
        )

    def stacked_P(self) -> np.ndarray:
        """D x D drift-integral matrix: P_f and the cross P's in the first K
        columns, zeros elsewhere."""
        P = np.zeros((self.D, self.D))
        sl = self.block_slices()
        P[sl[0], : self.K] = self.spline[0].P
        for i, cp in enumerate(self.cross_P):
            P[sl[i + 1], : self.K] = cp
        return P


@dataclass(frozen=True)
class LambdaBlocks:
    """Step-wise constant structure of the risk-premia vector.

    The discounting block splits into the K_s shortest buckets (one common
    value) and the remainder (another), then one value per tenor curve.
    """

    K_s: int
    sizes: tuple[int, ...] = field(init=False)
    sys_block_sizes: tuple[int, ...] = field(default=(), compare=True)

    def __post_init__(self) -> None:
        if not self.sys_block_sizes:
            raise ValueError("sys_block_sizes required")
        K = self.sys_block_sizes[0]
        if not 0 < self.K_s < K:
            raise ValueError("K_s must split the discount block")
        sizes = (self.K_s, K - self.K_s) + tuple(self.sys_block_sizes[1:])
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def for_system(cls, sys: CurveSystem, K_s: int = 2) -> "LambdaBlocks":
        return cls(K_s=K_s, sys_block_sizes=sys.block_sizes)

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    def expand(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_blocks,):
            raise ValueError(f"expected {self.n_blocks} block values")
        return np.repeat(values, self.sizes)

    def project(self, lam: np.ndarray) -> np.ndarray:
        """Block means of an unconstrained D-vector (idempotent with expand)."""
        lam = np.asarray(lam, dtype=float)
        edges = np.concatenate([[0], np.cumsum(self.sizes)])
        return np.array(
            [lam[a:b].mean() for a, b in zip(edges[:-1], edges[1:])]
        )

    def labels(self) -> list[str]:
        return ["lambda_s", "lambda_l"] + [
            f"lambda_tenor{i}" for i in range(1, self.n_blocks - 1)
        ]


def _repair_correlation(gamma: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """Clip eigenvalues at a small floor and renormalise the diagonal."""
    vals, vecs = np.linalg.eigh((gamma + gamma.T) / 2.0)
    vals = np.maximum(vals, floor)
    g = (vecs * vals) @ vecs.T
    d = np.sqrt(np.diag(g))
    g = g / np.outer(d, d)
    np.fill_diagonal(g, 1.0)
    return g


@dataclass(frozen=True)
class ModelParams:
    """Constant-volatility parameter set (omega, Gamma, lambda blocks)."""

    omega: np.ndarray
    gamma: np.ndarray
    lam_blocks: np.ndarray
    blocks: LambdaBlocks
    R: np.ndarray = field(init=False, compare=False)

    def __post_init__(self) -> None:
        omega = np.asarray(self.omega, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        lamb = np.asarray(self.lam_blocks, dtype=float)
        D = omega.size
        if gamma.shape != (D, D):
            raise ValueError("gamma shape must match omega length")
        if np.any(omega <= 0.0):
            raise ValueError("volatilities must be strictly positive")
        if not np.allclose(gamma, gamma.T, atol=1e-10):
            raise ValueError("gamma must be symmetric")
        if not np.allclose(np.diag(gamma), 1.0, atol=1e-8):
            raise ValueError("gamma must have unit diagonal")
        if sum(self.blocks.sizes) != D:
            raise ValueError("lambda block sizes must sum to D")
        try:
            R = np.linalg.cholesky(gamma)
        except np.linalg.LinAlgError:
            gamma = _repair_correlation(gamma)
            R = np.linalg.cholesky(gamma)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam_blocks", lamb)
        object.__setattr__(self, "R", R)

    @property
    def D(self) -> int:
        return int(self.omega.size)

    @property
    def lam(self) -> np.ndarray:
        """Full D-vector of risk premia."""
        return self.blocks.expand(self.lam_blocks)

    def sigma(self) -> np.ndarray:
        """Volatility matrix Sigma = diag(omega) R, Sigma Sigma^T = Omega Gamma Omega."""
        return self.omega[:, None] * self.R


@dataclass(frozen=True)
class StateVector:
    """Stacked forwards + FRA rates at one date."""

    values: np.ndarray
    date: dt.date | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "values", v)


def drift_from_params(sys: CurveSystem, params: ModelParams) -> np.ndarray:
    """Annualised drift mu = omega o (P o Gamma) omega - omega o (R lambda)."""
    if params.D != sys.D:
        raise ValueError("parameter dimension does not match system")
    P = sys.stacked_P()
    hjm = params.omega * ((P * params.gamma) @ params.omega)
    premium = params.omega * (params.R @ params.lam)
    return hjm - premium


def compute_y(
    sys: CurveSystem, prev: StateVector, next_: StateVector
) -> np.ndarray:
    """Observed stacked increment y = x(t+dt) - (I + M dt) x(t)."""
    if prev.values.shape != (sys.D,) or next_.values.shape != (sys.D,):
        raise ValueError("state dimension does not match system")
    if prev.date is not None and next_.date is not None and next_.date <= prev.date:
        raise ValueError("states out of order")
    return next_.values - sys.full_transition_matrix() @ prev.values


def step(
    sys: CurveSystem,
    params: ModelParams,
    state: StateVector,
    eps: np.ndarray,
) -> StateVector:
    """One Euler step of the VAR(1) with standard-normal shocks eps."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (sys.D,):
        raise ValueError("eps dimension does not match system")
    mu = drift_from_params(sys, params)
    x = (
        sys.full_transition_matrix() @ state.values
        + mu * sys.dt
        + (params.sigma() @ eps) * np.sqrt(sys.dt)
    )
    return StateVector(values=x, date=None)
