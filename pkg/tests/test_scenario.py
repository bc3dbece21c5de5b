import numpy as np
import pytest

from mchjm.dynamics import StateVector, drift_from_params
from mchjm.pca import decompose, select_components
from mchjm.scenario import (
    ForecastSpec,
    envelope,
    envelope_from_ensemble,
    envelope_from_moments,
    forecast_yields_ensemble,
    forecast_yields_moments,
    gaussian_moments,
    simulate_paths,
)


@pytest.fixture(scope="module")
def state(sys22):
    return StateVector(values=np.full(sys22.D, 0.02))


def test_one_step_moments_closed_form(sys22, true_params, state):
    mean, cov = gaussian_moments(sys22, true_params, state, 1)
    A = sys22.full_transition_matrix()
    mu = drift_from_params(sys22, true_params)
    sig = true_params.sigma()
    np.testing.assert_allclose(mean, A @ state.values + mu * sys22.dt, atol=1e-15)
    np.testing.assert_allclose(cov, sig @ sig.T * sys22.dt, atol=1e-18)


def test_drift_modes_agree_at_one_step(sys22, true_params, state):
    m1, _ = gaussian_moments(sys22, true_params, state, 1, "exact-recursion")
    m2, _ = gaussian_moments(sys22, true_params, state, 1, "constant-drift")
    np.testing.assert_allclose(m1, m2, atol=1e-15)


def test_drift_modes_differ_at_long_horizons(sys22, true_params, state):
    m1, _ = gaussian_moments(sys22, true_params, state, 52, "exact-recursion")
    m2, _ = gaussian_moments(sys22, true_params, state, 52, "constant-drift")
    assert np.abs(m1 - m2).max() > 1e-8


def test_moments_match_monte_carlo(sys22, true_params, state):
    k, n = 3, 40_000
    mean, cov = gaussian_moments(sys22, true_params, state, k)
    spec = ForecastSpec(horizon_steps=k, n_paths=n, method="gaussian-mc", seed=9)
    paths = simulate_paths(sys22, true_params, state, spec)
    sd = np.sqrt(np.diag(cov))
    se = sd / np.sqrt(n)
    assert np.all(np.abs(paths.mean(axis=0) - mean) < 4 * se)
    got = np.cov(paths, rowvar=False)
    cov_se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    assert np.abs(got - cov) .max() < (4 * cov_se).max()


def test_simulation_is_seed_deterministic(sys22, true_params, state):
    spec = ForecastSpec(horizon_steps=2, n_paths=500, method="gaussian-mc", seed=3)
    a = simulate_paths(sys22, true_params, state, spec)
    b = simulate_paths(sys22, true_params, state, spec)
    np.testing.assert_array_equal(a, b)


def test_pca_full_rank_loadings_equivalent(sys22, true_params, state):
    """Simulating through the F=D loading matrix reproduces the one-step
    covariance of the unreduced volatility matrix."""
    sig = true_params.sigma()
    W = select_components(decompose(sig @ sig.T), 1.0).W
    spec = ForecastSpec(horizon_steps=1, n_paths=60_000, method="gaussian-mc", seed=4)
    paths = simulate_paths(sys22, true_params, state, spec, W=W)
    want = sig @ sig.T * sys22.dt
    got = np.cov(paths, rowvar=False)
    scale = np.abs(np.diag(want)).max()
    assert np.abs(got - want).max() < 0.05 * scale


def test_envelope_monotone_in_coverage(rng):
    ens = rng.normal(size=(5000, 4))
    e95 = envelope_from_ensemble(ens, 0.95)
    e99 = envelope_from_ensemble(ens, 0.99)
    assert np.all(e99.lower <= e95.lower)
    assert np.all(e99.upper >= e95.upper)
    assert np.all(e95.lower <= e95.mean) and np.all(e95.mean <= e95.upper)


def test_gaussian_envelope_width(rng):
    mean = np.array([1.0, -2.0])
    cov = np.diag([4.0, 9.0])
    env = envelope_from_moments(mean, cov, 0.95)
    np.testing.assert_allclose(env.upper - env.lower,
                               2 * 1.959963984540054 * np.array([2.0, 3.0]),
                               rtol=1e-12)
    np.testing.assert_allclose(env.band2sd_upper, mean + 2 * np.array([2.0, 3.0]))


def test_bootstrap_heavy_tails_widen_the_envelope(sys22, true_params, state, rng):
    """Residual resampling from a t(3) pool produces wider 99% envelopes than
    Gaussian shocks with the same scale."""
    pool = rng.standard_t(df=3, size=(400, sys22.D)) / np.sqrt(3.0)
    spec_b = ForecastSpec(horizon_steps=1, n_paths=30_000, method="bootstrap", seed=6)
    boot = simulate_paths(sys22, true_params, state, spec_b, residual_pool=pool)
    spec_g = ForecastSpec(horizon_steps=1, n_paths=30_000, method="gaussian-mc", seed=6)
    gauss = simulate_paths(sys22, true_params, state, spec_g)
    eb = envelope_from_ensemble(boot, 0.99)
    eg = envelope_from_ensemble(gauss, 0.99)
    assert np.mean((eb.upper - eb.lower) > (eg.upper - eg.lower)) > 0.8


def test_bootstrap_requires_pool(sys22, true_params, state):
    spec = ForecastSpec(horizon_steps=1, n_paths=10, method="bootstrap")
    with pytest.raises(ValueError):
        simulate_paths(sys22, true_params, state, spec)


def test_closed_form_has_no_paths(sys22, true_params, state):
    spec = ForecastSpec(horizon_steps=1, method="gaussian-closed-form")
    with pytest.raises(ValueError):
        simulate_paths(sys22, true_params, state, spec)


def test_envelope_dispatch(rng):
    ens = rng.normal(size=(1000, 3))
    assert envelope(ens, 0.95).method == "mc"
    m = np.zeros(3)
    c = np.eye(3)
    assert envelope((m, c), 0.95).method == "gaussian-closed-form"


def test_yield_forecast_transform_consistency(sys22, true_params, state, rng):
    """Moment-space and path-space yield transforms agree (both are the same
    linear map of the discounting forward block)."""
    mean, cov = gaussian_moments(sys22, true_params, state, 4)
    ym, yc = forecast_yields_moments(mean, cov, sys22.spline[0])
    spec = ForecastSpec(horizon_steps=4, n_paths=50_000, method="gaussian-mc", seed=8)
    paths = simulate_paths(sys22, true_params, state, spec)
    ypaths = forecast_yields_ensemble(paths, sys22.spline[0])
    sd = np.sqrt(np.diag(yc))
    assert np.abs(ypaths.mean(axis=0) - ym).max() < 4 * sd.max() / np.sqrt(50_000)
    got_sd = ypaths.std(axis=0, ddof=1)
    np.testing.assert_allclose(got_sd, sd, rtol=0.05)


def test_spec_validation():
    with pytest.raises(ValueError):
        ForecastSpec(horizon_steps=0)
    with pytest.raises(ValueError):
        ForecastSpec(method="nope")
    with pytest.raises(ValueError):
        ForecastSpec(coverage=(1.5,))
    with pytest.raises(ValueError):
        ForecastSpec(drift_mode="other")
