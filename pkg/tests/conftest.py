"""Shared fixtures: the scalar benchmark model and its offline paths.

The scalar unit benchmark F=0, G=H=sigma=N=M=1, M_T=0, T=1, for
which Sigma(t) = S(t) = tanh t, Phi(t) = sech t, pi(t) = tanh(T - t) and,
with a standard normal initial law, P(t) = 1.
"""

import pytest

from lqpartial import (
    GaussianDensity,
    LinearModel,
    MixtureDensity,
    TimeGrid,
    solve_gaussian_offline,
    solve_offline,
    validate_model,
)


def make_benchmark(**overrides) -> LinearModel:
    params = dict(F=0.0, G=1.0, H=1.0, sigma=1.0, M=1.0, N=1.0, M_T=0.0, T=1.0)
    params.update(overrides)
    return validate_model(LinearModel(**params))


@pytest.fixture(scope="session")
def bench():
    return make_benchmark()


@pytest.fixture(scope="session")
def grid_1k(bench):
    return TimeGrid(1000, bench.T)


@pytest.fixture(scope="session")
def offline_1k(bench, grid_1k):
    return solve_offline(bench, grid_1k)


@pytest.fixture(scope="session")
def grid_200(bench):
    return TimeGrid(200, bench.T)


@pytest.fixture(scope="session")
def offline_200(bench, grid_200):
    return solve_offline(bench, grid_200)


@pytest.fixture(scope="session")
def gauss_std():
    return GaussianDensity(mean0=0.0, cov0=1.0)


@pytest.fixture(scope="session")
def mixture():
    return MixtureDensity(
        weights=[0.5, 0.5], means=[[-1.0], [1.0]], covs=[[[0.25]], [[0.25]]]
    )


@pytest.fixture(scope="session")
def gauss_offline_1k(bench, grid_1k, offline_1k, gauss_std):
    return solve_gaussian_offline(bench, grid_1k, offline_1k, gauss_std.mean0, gauss_std.cov0)
