"""Curve snapshots, dated histories, and static rate transforms.

Rates are continuously compounded decimals for yields and instantaneous
forwards, and simple rates for FRA curves. Negative values are allowed
throughout; only finiteness is enforced.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace

import numpy as np

from .grids import BucketGrid
from .spline import SplineOperators, build_evaluation_matrix

__all__ = [
    "CurveSnapshot",
    "CurveHistory",
    "yields_to_discounts",
    "discounts_to_yields",
    "yields_to_forwards",
    "forwards_to_yields",
    "tenor_yields_to_fra",
    "subset_grid",
]


@dataclass(frozen=True)
class CurveSnapshot:
    """One dated curve on a fixed bucket grid."""

    date: dt.date
    grid: BucketGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.grid),):
            raise ValueError(
                f"values shape {v.shape} does not match grid length {len(self.grid)}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")


@dataclass(frozen=True)
class CurveHistory:
    """Date-ordered snapshots of one curve on a shared grid.

    tenor is the underlying accrual length in year fractions; 0 marks the
    discounting (overnight) curve.
    """

    curve_id: str
    tenor: float
    snapshots: tuple[CurveSnapshot, ...]

    def __post_init__(self) -> None:
        snaps = tuple(self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        if not snaps:
            raise ValueError("history needs at least one snapshot")
        grid = snaps[0].grid
        for sn in snaps[1:]:
            if not np.array_equal(sn.grid.s, grid.s):
                raise ValueError("all snapshots must share one grid")
        dates = [sn.date for sn in snaps]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("snapshot dates must be strictly increasing")

    @property
    def grid(self) -> BucketGrid:
        return self.snapshots[0].grid

    @property
    def dates(self) -> list[dt.date]:
        return [sn.date for sn in self.snapshots]

    def matrix(self) -> np.ndarray:
        """L x K matrix of values, one row per date."""
        return np.vstack([sn.values for sn in self.snapshots])

    def map(self, fn) -> "CurveHistory":
        return replace(self, snapshots=tuple(fn(sn) for sn in self.snapshots))


def _check_ops(snap: CurveSnapshot, ops: SplineOperators) -> None:
    if not np.array_equal(snap.grid.s, ops.grid.s):
        raise ValueError("spline operators were built on a different grid")


def yields_to_discounts(snap: CurveSnapshot) -> CurveSnapshot:
    """ZC yields Y(t, x) to ZCB prices exp(-x Y)."""
    return replace(snap, values=np.exp(-snap.grid.s * snap.values))


def discounts_to_yields(snap: CurveSnapshot) -> CurveSnapshot:
    """ZCB prices back to continuously compounded yields."""
    if np.any(snap.values <= 0.0):
        raise ValueError("discount factors must be positive")
    return replace(snap, values=-np.log(snap.values) / snap.grid.s)


def yields_to_forwards(snap: CurveSnapshot, ops: SplineOperators) -> CurveSnapshot:
    """Instantaneous forwards f = Y + x dY/dx with the spline derivative."""
    _check_ops(snap, ops)
    return replace(snap, values=snap.values + snap.grid.s * (ops.M @ snap.values))


def forwards_to_yields(fwd: CurveSnapshot, ops: SplineOperators) -> CurveSnapshot:
    """Yields recovered by averaging the forward spline: Y_i = (P f)_i / s_i."""
    _check_ops(fwd, ops)
    return replace(fwd, values=(ops.P @ fwd.values) / fwd.grid.s)


def tenor_yields_to_fra(
    snap: CurveSnapshot,
    tenor: float,
    target_grid: BucketGrid,
    ops: SplineOperators,
) -> CurveSnapshot:
    """Simple FRA par rates from the tenor curve's own ZC yields.

    FRA(x) = (P(x - tenor) / P(x) - 1) / tenor with both discounts read off
    the tenor ZC curve; the off-grid point x - tenor is evaluated with the
    Bessel spline (flat below the first bucket). Defined only for x >= tenor.
    """
    _check_ops(snap, ops)
    if tenor <= 0.0:
        raise ValueError("tenor must be positive")
    x = target_grid.s
    if np.any(x < tenor - 1e-12):
        raise ValueError("every target bucket must be >= the tenor")
    y_at_x = ops.evaluate(snap.values, x)
    x_back = np.maximum(x - tenor, 0.0)
    y_back = build_evaluation_matrix(snap.grid, np.maximum(x_back, 0.0)) @ snap.values
    fra = (np.exp(x * y_at_x - x_back * y_back) - 1.0) / tenor
    return CurveSnapshot(date=snap.date, grid=target_grid, values=fra)


def subset_grid(hist: CurveHistory, target: BucketGrid) -> CurveHistory:
    """Restrict a history to a sub-grid of its buckets (order preserved)."""
    idx = hist.grid.index_of(target.s)
    snaps = tuple(
        CurveSnapshot(date=sn.date, grid=target, values=sn.values[idx])
        for sn in hist.snapshots
    )
    return replace(hist, snapshots=snaps)
