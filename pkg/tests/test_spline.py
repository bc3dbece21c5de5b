import numpy as np
import pytest

from conftest import random_grid
from mchjm.grids import BucketGrid
from mchjm.spline import (
    SplineOperators,
    build_cross_integral_matrix,
    build_evaluation_matrix,
)

GRID = BucketGrid(np.array([0.25, 0.5, 1.0, 2.0, 5.0, 10.0]))


def gauss_legendre_integral(ops, g, a, b, n=8):
    """Independent quadrature of the assembled spline over [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (b - a) * x + 0.5 * (a + b)
    vals = ops.evaluate(g, pts)
    return 0.5 * (b - a) * float(w @ vals)


def oracle_integral(ops, g, upper):
    """Piece-by-piece quadrature from 0 to `upper` (flat below the first node)."""
    s = ops.grid.s
    total = min(upper, s[0]) * g[0]
    lo = s[0]
    for hi in list(s[1:]) + [upper]:
        if upper <= lo:
            break
        total += gauss_legendre_integral(ops, g, lo, min(hi, upper))
        lo = min(hi, upper)
    return total


def parabolic_slope(xs, ys, at):
    """Derivative at `at` of the degree-2 polynomial through three points."""
    c = np.polyfit(xs, ys, 2)
    return 2.0 * c[0] * at + c[1]


def test_constant_is_reproduced():
    ops = SplineOperators.build(GRID)
    one = np.ones(len(GRID))
    assert np.abs(ops.M @ one).max() < 1e-13
    assert np.abs(ops.Mp @ one).max() < 1e-13
    assert np.abs(ops.Mpp @ one).max() < 1e-13
    np.testing.assert_allclose(ops.P @ one, GRID.s, atol=1e-13)
    pts = np.linspace(0.0, GRID.s[-1], 37)
    np.testing.assert_allclose(ops.evaluate(one, pts), 1.0, atol=1e-13)


def test_linear_is_reproduced_above_first_node():
    ops = SplineOperators.build(GRID)
    s = GRID.s
    assert np.abs(ops.M @ s - 1.0).max() < 1e-12
    pts = np.linspace(s[0], s[-1], 23)
    np.testing.assert_allclose(ops.evaluate(s, pts), pts, atol=1e-12)
    # integral: flat value s1 on [0, s1], then the exact linear integral
    expected = s[0] ** 2 + (s**2 - s[0] ** 2) / 2.0
    np.testing.assert_allclose(ops.P @ s, expected, atol=1e-12)


def test_quadratic_is_reproduced_above_first_node():
    ops = SplineOperators.build(GRID)
    g = 1.5 - 0.3 * GRID.s + 0.02 * GRID.s**2
    pts = np.linspace(GRID.s[0], GRID.s[-1], 41)
    expected = 1.5 - 0.3 * pts + 0.02 * pts**2
    np.testing.assert_allclose(ops.evaluate(g, pts), expected, atol=1e-11)


def test_node_interpolation_random_grids(rng):
    for _ in range(20):
        grid = BucketGrid(random_grid(rng))
        g = rng.normal(size=len(grid))
        E = build_evaluation_matrix(grid, grid.s)
        assert np.abs(E @ g - g).max() < 1e-12


def test_slopes_match_three_point_parabolas(rng):
    for _ in range(20):
        grid = BucketGrid(random_grid(rng))
        s = grid.s
        g = rng.normal(size=len(grid))
        b = SplineOperators.build(grid).M @ g
        K = len(grid)
        for i in range(K):
            lo = min(max(i - 1, 0), K - 3)
            expected = parabolic_slope(s[lo : lo + 3], g[lo : lo + 3], s[i])
            assert abs(b[i] - expected) < 1e-10 * max(1.0, abs(expected))


def test_integral_matrix_matches_quadrature(rng):
    for _ in range(10):
        grid = BucketGrid(random_grid(rng))
        ops = SplineOperators.build(grid)
        g = rng.normal(size=len(grid))
        for i in (0, len(grid) // 2, len(grid) - 1):
            want = oracle_integral(ops, g, grid.s[i])
            got = float(ops.P[i] @ g)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_spline_is_continuous_with_continuous_derivative(rng):
    grid = BucketGrid(random_grid(rng, K=8))
    g = rng.normal(size=8)
    ops = SplineOperators.build(grid)
    eps = 1e-7
    for si in grid.s[1:-1]:
        left = ops.evaluate(g, np.array([si - eps]))[0]
        right = ops.evaluate(g, np.array([si + eps]))[0]
        assert abs(left - right) < 1e-5
        dl = (ops.evaluate(g, np.array([si]))[0] - left) / eps
        dr = (right - ops.evaluate(g, np.array([si]))[0]) / eps
        assert abs(dl - dr) < 1e-4


def test_cross_integral_on_same_grid_equals_P():
    ops = SplineOperators.build(GRID)
    np.testing.assert_allclose(
        build_cross_integral_matrix(GRID, GRID), ops.P, atol=1e-13
    )


def test_cross_integral_subgrid_rows():
    sub = BucketGrid(GRID.s[np.array([1, 3, 4])])
    cp = build_cross_integral_matrix(GRID, sub)
    ops = SplineOperators.build(GRID)
    g = np.array([0.5, -1.0, 2.0, 0.1, 1.3, -0.4])
    for r, x in enumerate(sub.s):
        want = oracle_integral(ops, g, x)
        assert abs(cp[r] @ g - want) < 1e-10


def test_evaluation_bounds():
    ops = SplineOperators.build(GRID)
    g = np.arange(6.0)
    # flat below the first node
    assert ops.evaluate(g, np.array([0.0, 0.1]))[0] == pytest.approx(g[0])
    assert ops.evaluate(g, np.array([0.1]))[0] == pytest.approx(g[0])
    with pytest.raises(ValueError):
        ops.evaluate(g, np.array([GRID.s[-1] + 1.0]))
    with pytest.raises(ValueError):
        ops.evaluate(g, np.array([-0.5]))
