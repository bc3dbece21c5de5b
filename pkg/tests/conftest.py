import numpy as np
import pytest

from mchjm.fixture import default_true_params, benchmark_system, simulate_states


@pytest.fixture(scope="session")
def sys22():
    """The 22-dimensional two-curve benchmark system used throughout the tests."""
    return benchmark_system()


@pytest.fixture(scope="session")
def true_params(sys22):
    return default_true_params(sys22)


@pytest.fixture(scope="session")
def weekly_states(sys22, true_params):
    """157 weekly states -> 156 increments, one estimation window."""
    return simulate_states(sys22, true_params, n_steps=156, seed=20240901)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, K=None):
    """Random strictly increasing positive grid with K in [3, 15]."""
    if K is None:
        K = int(rng.integers(3, 16))
    steps = rng.uniform(0.05, 5.0, size=K)
    return np.cumsum(steps) + rng.uniform(0.01, 0.5)
