import numpy as np
import pytest
from scipy.stats import multivariate_normal

from mchjm.dynamics import LambdaBlocks, ModelParams, drift_from_params
from mchjm.estimation import (
    EstimationWindow,
    bootstrap_errors,
    fit,
    neg_log_likelihood,
    pearson_initial_params,
    rebuild_y_series,
    residuals,
)


@pytest.fixture(scope="module")
def window(sys22, true_params, weekly_states):
    values = np.vstack([s.values for s in weekly_states])
    A = sys22.full_transition_matrix()
    return EstimationWindow(y_series=values[1:] - values[:-1] @ A.T, sys=sys22)


@pytest.fixture(scope="module")
def fitted(window, true_params):
    return fit(window, true_params.blocks)


def test_residuals_inverse_of_rebuild(window, true_params):
    eta = residuals(window, true_params)
    back = rebuild_y_series(window, true_params, eta)
    np.testing.assert_allclose(back, window.y_series, atol=1e-15)


def test_nll_matches_multivariate_normal_logpdf(window, true_params):
    """Oracle: the criterion equals the exact Gaussian NLL of the y series up
    to the constant (L D / 2) ln dt that the estimator drops."""
    mu = drift_from_params(window.sys, true_params) * window.dt
    sig = true_params.sigma()
    cov = sig @ sig.T * window.dt
    exact = -multivariate_normal(mean=mu, cov=cov).logpdf(window.y_series).sum()
    ours = neg_log_likelihood(window, true_params)
    constant = 0.5 * window.L * window.sys.D * np.log(window.dt)
    assert ours + constant == pytest.approx(exact, rel=1e-10)


def test_nll_identity_correlation_decomposes(sys22, rng):
    """With Gamma = I the joint NLL is the sum of per-bucket univariate NLLs."""
    blocks = LambdaBlocks.for_system(sys22, K_s=2)
    omega = rng.uniform(0.002, 0.01, size=sys22.D)
    params = ModelParams(omega=omega, gamma=np.eye(sys22.D),
                         lam_blocks=np.zeros(blocks.n_blocks), blocks=blocks)
    y = rng.normal(scale=0.001, size=(40, sys22.D))
    window = EstimationWindow(y_series=y, sys=sys22)
    mu = drift_from_params(sys22, params) * window.dt
    sd = omega * np.sqrt(window.dt)
    per_bucket = (
        0.5 * np.log(2 * np.pi) + np.log(sd) + 0.5 * ((y - mu) / sd) ** 2
    ).sum()
    constant = 0.5 * window.L * sys22.D * np.log(window.dt)
    assert neg_log_likelihood(window, params) == pytest.approx(
        per_bucket - constant, rel=1e-10
    )


def test_pearson_initialisation(window):
    blocks = LambdaBlocks.for_system(window.sys, K_s=2)
    init = pearson_initial_params(window, blocks)
    np.testing.assert_array_equal(init.lam_blocks, 0.0)
    np.testing.assert_allclose(
        init.omega,
        window.y_series.std(axis=0, ddof=1) / np.sqrt(window.dt),
        rtol=1e-12,
    )
    np.testing.assert_allclose(
        init.gamma, np.corrcoef(window.y_series, rowvar=False), atol=1e-10
    )


def test_fit_converges_and_improves_on_init(window, fitted):
    assert fitted.converged
    init = pearson_initial_params(window, fitted.params.blocks)
    assert fitted.neg_log_lik < neg_log_likelihood(window, init)


def test_fit_is_a_coordinatewise_stationary_point(window, fitted):
    """Finite-difference slope of the NLL (correlation frozen) is ~0 in every
    theta coordinate at the fitted values."""
    params = fitted.params
    f0 = neg_log_likelihood(window, params)

    def nll_with(lam_blocks, omega):
        trial = ModelParams(omega=omega, gamma=params.gamma,
                            lam_blocks=lam_blocks, blocks=params.blocks)
        return neg_log_likelihood(window, trial)

    for b in range(params.blocks.n_blocks):
        h = 1e-3
        lam = params.lam_blocks.copy()
        lam[b] += h
        up = nll_with(lam, params.omega)
        lam[b] -= 2 * h
        dn = nll_with(lam, params.omega)
        # both perturbations must not improve; curvature dominates the slope
        assert min(up, dn) > f0 - 1e-6
    for i in range(0, window.sys.D, 5):
        h = 1e-6
        om = params.omega.copy()
        om[i] += h
        up = nll_with(params.lam_blocks, om)
        om[i] -= 2 * h
        dn = nll_with(params.lam_blocks, om)
        assert min(up, dn) > f0 - 1e-6


def test_fit_recovers_truth_roughly(fitted, true_params):
    # a single 3-year window: expect ballpark recovery (tight bounds are the
    # business of the acceptance suite, which uses bootstrap errors)
    assert np.abs(fitted.params.lam_blocks - true_params.lam_blocks).max() < 1.0
    rel = np.abs(fitted.params.omega / true_params.omega - 1.0)
    assert rel.max() < 0.25


def test_looser_tolerance_converges_in_fewer_sweeps(window, fitted):
    blocks = fitted.params.blocks
    loose = fit(window, blocks, gamma_tol=1e-2)
    assert loose.converged
    assert loose.n_iters <= fitted.n_iters


def test_residual_correlation_matches_fitted_gamma(window, fitted):
    eta = residuals(window, fitted.params)
    Q = eta.T @ eta / window.L
    d = np.sqrt(np.diag(Q))
    np.testing.assert_allclose(
        Q / np.outer(d, d), fitted.params.gamma, atol=1e-3
    )


def test_bootstrap_smoke(window, fitted):
    res = bootstrap_errors(window, fitted, n_boot=8, seed=5)
    assert res.n_boot == 8 and res.n_boot_failures == 0
    assert res.std_errors["lambda"].shape == fitted.params.lam_blocks.shape
    assert np.all(res.std_errors["lambda"] > 0)
    assert np.all(res.std_errors["omega"] > 0)
    assert res.lambda_significance() is not None


def test_window_validation(sys22):
    with pytest.raises(ValueError):
        EstimationWindow(y_series=np.zeros((10, 3)), sys=sys22)
    bad = np.zeros((10, sys22.D))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        EstimationWindow(y_series=bad, sys=sys22)
