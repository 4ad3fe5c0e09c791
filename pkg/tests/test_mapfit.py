import numpy as np
import pytest
from hypothesis import given, strategies as st

from perflab._solvers import Box
from perflab.atlas import COIN_BETA_MAX
from perflab.core import Dataset, ParamBall, RngStream, deploy_and_collect
from perflab.mapfit import (
    SingularDesignError,
    coin_ls_objective,
    fit_budget_boundary_mass,
    fit_coin_ls,
    fit_erm_projected_gd,
    fit_location_ls,
    fit_scalar_beta_ls,
)
from perflab.maps import CoinMap, LocationQuadMap
from perflab.selftest import budget_bound_trials


def test_coin_ls_examples():
    assert fit_coin_ls(Dataset([1.0, 1.0], [1.0, 0.0])).beta == 0.0
    r = fit_coin_ls(Dataset([1.0], [1.0]))
    assert r.beta == COIN_BETA_MAX and r.clamped
    with pytest.raises(SingularDesignError):
        fit_coin_ls(Dataset([0.0, 0.0], [1.0, 0.0]))
    data = deploy_and_collect(CoinMap(0.3, 0.2), 100_000, RngStream(0))
    assert fit_coin_ls(data).beta == pytest.approx(0.45, abs=0.02)


def test_scalar_beta_examples():
    th = np.random.default_rng(0).standard_normal((30, 3))
    data = Dataset(th, np.hstack([1.7 * th, np.zeros((30, 1))]))
    assert fit_scalar_beta_ls(data).beta == pytest.approx(1.7, abs=1e-14)
    two = Dataset(np.eye(2), np.array([[1.0, 0.0, 0.0], [0.0, 3.0, 0.0]]))
    assert fit_scalar_beta_ls(two).beta == pytest.approx(2.0)
    big = Dataset(th, np.hstack([10 * th, np.zeros((30, 1))]))
    r = fit_scalar_beta_ls(big, beta_min=0, beta_max=5)
    assert r.beta == 5 and r.clamped
    with pytest.raises(SingularDesignError):
        fit_scalar_beta_ls(Dataset(np.zeros((3, 2)), np.ones((3, 3))))


def test_location_ls_examples():
    d = Dataset(np.eye(2), np.diag([2.0, 3.0]))
    np.testing.assert_allclose(fit_location_ls(d, intercept=False).beta.M, np.diag([2.0, 3.0]), atol=1e-14)
    m = LocationQuadMap.generate(4, 0.0, 0.0, seed=2)
    data = deploy_and_collect(m, 5, RngStream(1))
    fit = fit_location_ls(data)
    np.testing.assert_allclose(fit.beta.M, m.M1, atol=1e-8)
    np.testing.assert_allclose(fit.beta.b, m.b, atol=1e-8)
    with pytest.raises(SingularDesignError):
        fit_location_ls(Dataset(np.ones((1, 2)), np.ones((1, 2))))


def test_omitted_column_fit_is_restriction():
    # product-law (independent coordinate) exploration: the population fit keeps the true columns
    m = LocationQuadMap.generate(3, 0.0, 0.1, seed=4)
    data = deploy_and_collect(m, 200_000, RngStream(3), exploration=lambda g, n: g.uniform(-0.5, 0.5, (n, 3)))
    fit = fit_location_ls(data, columns=[0, 2])
    np.testing.assert_allclose(fit.beta.M, m.M1[:, [0, 2]], atol=0.01)


def test_boundary_mass_examples():
    def uniform_band(b):
        return min(max(b, 0.0), 0.5)

    th = np.ones((10, 1))
    none = Dataset(th, np.hstack([np.full((10, 1), 0.9), np.zeros((10, 1))]))
    assert fit_budget_boundary_mass(none, uniform_band, 0.5, 0.01, 0.5).beta == 0.0
    x = np.r_[np.full(2, 0.5), np.full(8, 0.9)]
    two = Dataset(th, np.c_[x, np.zeros(10)])
    assert fit_budget_boundary_mass(two, uniform_band, 0.5, 0.01, 0.5).beta == pytest.approx(0.2, abs=1e-9)
    x = np.r_[np.full(9, 0.5), 0.9]
    r = fit_budget_boundary_mass(Dataset(th, np.c_[x, np.zeros(10)]), uniform_band, 0.5, 0.01, 0.5)
    assert r.beta == 0.5 and r.clamped
    with pytest.raises(ValueError):
        fit_budget_boundary_mass(two, lambda b: -b, 0.5, 0.01, 0.5)
    with pytest.raises(ValueError):
        fit_budget_boundary_mass(two, uniform_band, 0.5, 0.0, 0.5)


def quadratic_objective(c):
    c = np.atleast_1d(c)

    def r(thetas, zs, beta):
        n = thetas.shape[0]
        return np.full(n, float(np.sum((beta - c) ** 2))), np.tile(2 * (beta - c), (n, 1))

    return r


def test_erm_examples():
    data = Dataset(np.zeros((4, 1)), np.zeros((4, 1)))
    box = Box(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(fit_erm_projected_gd(data, quadratic_objective([0.3, 0.6]), box).beta, [0.3, 0.6],
                               atol=1e-8)
    np.testing.assert_allclose(fit_erm_projected_gd(data, quadratic_objective([1.7, -2.0]), box).beta, [1.0, 0.0])


def test_erm_matches_coin_closed_form():
    data = deploy_and_collect(CoinMap(0.2, 0.1), 5000, RngStream(8))
    r = fit_erm_projected_gd(data, coin_ls_objective, Box.interval(0.0, COIN_BETA_MAX))
    assert float(r.beta[0]) == pytest.approx(fit_coin_ls(data).beta, abs=1e-6)


@given(st.floats(0.01, 0.45), st.integers(0, 10_000))
def test_erm_monotone_descent(mu, seed):
    data = deploy_and_collect(CoinMap(mu), 300, RngStream(seed))
    r = fit_erm_projected_gd(data, coin_ls_objective, Box.interval(0.0, COIN_BETA_MAX), max_iters=30)
    assert r.objective <= r.diagnostics["initial_objective"] + 1e-15


def test_location_rate_slope():
    m = LocationQuadMap.generate(5, 0.0, 0.5, seed=1)
    ball = ParamBall(5)
    proxy = fit_location_ls(deploy_and_collect(m, 1_000_000, RngStream(99), ball)).beta.M
    budgets = [500, 1000, 2000, 4000, 8000, 16000, 32000]
    err = []
    for n in budgets:
        err.append(np.mean([np.linalg.norm(fit_location_ls(deploy_and_collect(m, n, RngStream(n, path=(r,)), ball))
                                           .beta.M - proxy, 2) for r in range(20)]))
    slope = np.polyfit(np.log(budgets), np.log(err), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_budget_estimator_bound():
    share, _, _ = budget_bound_trials(reps=200, n=10_000, seed=1)
    assert share >= 0.95
