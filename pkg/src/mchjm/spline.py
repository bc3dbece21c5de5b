"""Bessel cubic-spline operators as explicit matrices on a bucket grid.

Every spline quantity used by the model is linear in the sampled curve
values, so derivatives, polynomial coefficients, integrals and off-grid
evaluations are all represented as matrices acting on the sample vector g:

* ``M  g`` -- first derivative at every node (three-point Bessel slopes,
  one-sided at the two ends),
* ``Mp g`` / ``Mpp g`` -- quadratic and cubic coefficients of the K-1
  polynomial pieces (last rows zero-padded),
* ``P  g`` -- integral of the assembled spline from 0 to each node, with
  flat extrapolation on [0, s1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import BucketGrid

__all__ = [
    "SplineOperators",
    "build_derivative_matrix",
    "build_c_d_matrices",
    "build_integral_matrix",
    "build_cross_integral_matrix",
    "build_evaluation_matrix",
]


def build_derivative_matrix(grid: BucketGrid) -> np.ndarray:
    """K x K matrix mapping node samples to Bessel-spline slopes b_i."""
    s = grid.s
    K = len(grid)
    M = np.zeros((K, K))
    # interior rows: slope at s_i of the parabola through (i-1, i, i+1)
    for i in range(1, K - 1):
        sl, sm, sr = s[i - 1], s[i], s[i + 1]
        M[i, i - 1] = (sm - sr) / ((sm - sl) * (sr - sl))
        M[i, i] = (sl - 2.0 * sm + sr) / ((sm - sl) * (sr - sm))
        M[i, i + 1] = (sm - sl) / ((sr - sm) * (sr - sl))
    # one-sided rows: slope of the boundary parabola at the end node itself
    s1, s2, s3 = s[0], s[1], s[2]
    M[0, 0] = (2.0 * s1 - s3 - s2) / ((s2 - s1) * (s3 - s1))
    M[0, 1] = (s3 - s1) / ((s3 - s2) * (s2 - s1))
    M[0, 2] = (s1 - s2) / ((s3 - s2) * (s3 - s1))
    sa, sb, sc = s[K - 3], s[K - 2], s[K - 1]
    M[K - 1, K - 3] = (sc - sb) / ((sb - sa) * (sc - sa))
    M[K - 1, K - 2] = (sa - sc) / ((sb - sa) * (sc - sb))
    M[K - 1, K - 1] = (2.0 * sc - sb - sa) / ((sc - sb) * (sc - sa))
    return M


def build_c_d_matrices(grid: BucketGrid) -> tuple[np.ndarray, np.ndarray]:
    """Matrices recovering the quadratic (c) and cubic (d) piece coefficients.

    The pieces interpolate the nodes with slopes M g: the two boundary pieces
    are the end parabolas (d = 0) and the interior pieces are cubic Hermite
    segments. Rows beyond the K-1 existing pieces are zero.
    """
    s = grid.s
    K = len(grid)
    M = build_derivative_matrix(grid)
    Mp = np.zeros((K, K))
    Mpp = np.zeros((K, K))
    ds = np.diff(s)
    # scaled first differences (E g)_h = (g_{h+1} - g_h) / ds_h
    E = np.zeros((K - 1, K))
    for h in range(K - 1):
        E[h, h] = -1.0 / ds[h]
        E[h, h + 1] = 1.0 / ds[h]
    # boundary parabolas: value + slope at the left node fix c, d = 0
    Mp[0] = (E[0] - M[0]) / ds[0]
    Mp[K - 2] = (E[K - 2] - M[K - 2]) / ds[K - 2]
    # interior Hermite pieces match values and slopes at both ends
    for h in range(1, K - 2):
        Mp[h] = (3.0 * E[h] - 2.0 * M[h] - M[h + 1]) / ds[h]
        Mpp[h] = (M[h] + M[h + 1] - 2.0 * E[h]) / ds[h] ** 2
    return Mp, Mpp


def _piece_index(s: np.ndarray, x: float) -> int:
    h = int(np.searchsorted(s, x, side="right")) - 1
    return min(max(h, 0), len(s) - 2)


def _integral_row(
    grid: BucketGrid,
    x: float,
    M: np.ndarray,
    Mp: np.ndarray,
    Mpp: np.ndarray,
) -> np.ndarray:
    """Row vector r with r . g = integral of the spline of g from 0 to x."""
    s = grid.s
    K = len(grid)
    if x > s[-1] + 1e-12:
        raise ValueError(f"integration limit {x} beyond last bucket {s[-1]}")
    row = np.zeros(K)
    row[0] += min(x, s[0])  # flat extrapolation on [0, s1]
    if x <= s[0]:
        return row
    h_last = _piece_index(s, x)
    for h in range(h_last):
        t = s[h + 1] - s[h]
        row[h] += t
        row += M[h] * t**2 / 2.0 + Mp[h] * t**3 / 3.0 + Mpp[h] * t**4 / 4.0
    t = x - s[h_last]
    if t > 0.0:
        row[h_last] += t
        row += M[h_last] * t**2 / 2.0 + Mp[h_last] * t**3 / 3.0 + Mpp[h_last] * t**4 / 4.0
    return row


def build_integral_matrix(grid: BucketGrid) -> np.ndarray:
    """K x K matrix with (P g)_i = integral of the spline of g on [0, s_i]."""
    M = build_derivative_matrix(grid)
    Mp, Mpp = build_c_d_matrices(grid)
    return np.vstack([_integral_row(grid, x, M, Mp, Mpp) for x in grid.s])


def build_cross_integral_matrix(grid_f: BucketGrid, grid_d: BucketGrid) -> np.ndarray:
    """K_d x K_f matrix integrating the grid_f spline up to each grid_d bucket."""
    M = build_derivative_matrix(grid_f)
    Mp, Mpp = build_c_d_matrices(grid_f)
    return np.vstack([_integral_row(grid_f, x, M, Mp, Mpp) for x in grid_d.s])


def build_evaluation_matrix(grid: BucketGrid, points: np.ndarray) -> np.ndarray:
    """len(points) x K matrix evaluating the spline of g at arbitrary points.

    Points below s1 use the flat-extrapolation value g(s1); points beyond s_K
    are rejected.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any(pts < 0.0):
        raise ValueError("evaluation points must be nonnegative")
    if np.any(pts > grid.s[-1] + 1e-12):
        raise ValueError("evaluation beyond the last bucket is not supported")
    M = build_derivative_matrix(grid)
    Mp, Mpp = build_c_d_matrices(grid)
    K = len(grid)
    out = np.zeros((pts.size, K))
    for r, x in enumerate(pts):
        if x <= grid.s[0]:
            out[r, 0] = 1.0
            continue
        h = _piece_index(grid.s, x)
        t = x - grid.s[h]
        out[r, h] += 1.0
        out[r] += M[h] * t + Mp[h] * t**2 + Mpp[h] * t**3
    return out


@dataclass(frozen=True)
class SplineOperators:
    """Immutable bundle of the spline matrices for one grid."""

    grid: BucketGrid
    M: np.ndarray
    Mp: np.ndarray
    Mpp: np.ndarray
    P: np.ndarray

    @classmethod
    def build(cls, grid: BucketGrid) -> "SplineOperators":
        M = build_derivative_matrix(grid)
        Mp, Mpp = build_c_d_matrices(grid)
        P = build_integral_matrix(grid)
        for a in (M, Mp, Mpp, P):
            a.setflags(write=False)
        return cls(grid=grid, M=M, Mp=Mp, Mpp=Mpp, P=P)

    def evaluate(self, g: np.ndarray, points: np.ndarray) -> np.ndarray:
        return build_evaluation_matrix(self.grid, points) @ np.asarray(g, float)
