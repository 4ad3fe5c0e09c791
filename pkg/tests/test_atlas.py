import numpy as np
import pytest
from hypothesis import given, strategies as st

from perflab.atlas import (
    CoinAtlas,
    ConcaveQuadraticUtility,
    LocationAtlas,
    LocationParams,
    MixtureAtlas,
    OutcomesAtlas,
    ProphecyAtlas,
    StratClassAtlas,
    atlas_plug_in_risk_mc,
    aux_atlas_sample,
    coin_plug_in_argmin,
    coin_plug_in_risk,
    location_atlas_risk,
    strat_reg_atlas_response,
)
from perflab.core import RngStream, squared_loss
from perflab.maps import StratClassMap
from perflab.selftest import central_diff, gradient_cases, mc_cases


@pytest.mark.parametrize("beta, theta, value", [(0, 0.5, 0.25), (0, 0, 0.5), (0.3, 0.875, 0.19375)])
def test_coin_risk_examples(beta, theta, value):
    assert coin_plug_in_risk(beta, theta) == pytest.approx(value, abs=1e-15)


@pytest.mark.parametrize("beta, ans", [(0.0, 0.5), (0.3, 0.875), (0.45, 1.0)])
def test_coin_argmin_examples(beta, ans):
    assert coin_plug_in_argmin(beta) == pytest.approx(ans, abs=1e-15)


def test_coin_box():
    with pytest.raises(ValueError):
        coin_plug_in_risk(0.5, 0.2)
    with pytest.raises(ValueError):
        coin_plug_in_argmin(0.6)


@given(st.floats(0, 0.4999))
def test_coin_argmin_is_grid_minimum(beta):
    grid = np.linspace(0, 1, 2001)
    best = min(coin_plug_in_risk(beta, t) for t in grid)
    assert coin_plug_in_risk(beta, coin_plug_in_argmin(beta)) <= best + 1e-12


def test_location_risk_examples():
    gen = np.random.default_rng(0)
    for th in gen.standard_normal((5, 3)):
        assert location_atlas_risk(np.eye(3), np.zeros(3), th) == 0.0
    assert location_atlas_risk([[2.0]], [1.0], [0.0]) == 1.0
    assert location_atlas_risk([[2.0]], [1.0], [-1.0]) == 0.0
    with pytest.raises(ValueError):
        location_atlas_risk(np.eye(2), np.zeros(3), np.zeros(3))


def test_location_atlas_columns_embed():
    a = LocationAtlas(3, columns=[0, 2])
    beta = LocationParams(np.arange(6.0).reshape(3, 2), np.zeros(3))
    P = a.embed(beta)
    np.testing.assert_array_equal(P[:, 1], 0)
    th = np.array([0.1, 0.2, 0.3])
    assert a.risk(beta, th, squared_loss()) == pytest.approx(location_atlas_risk(beta.M, beta.b, th, [0, 2]))


def test_strat_reg_response_linear_and_concave():
    x0 = np.array([[0.1, -0.2]])
    th = np.array([0.5, 0.25])
    np.testing.assert_array_equal(strat_reg_atlas_response(x0, th, 1.5), x0 + 1.5 * th)
    np.testing.assert_array_equal(strat_reg_atlas_response(x0, th, 0.0), x0)
    u = ConcaveQuadraticUtility(0.5)
    x = strat_reg_atlas_response(x0, th, 1.0, u)
    np.testing.assert_allclose(x, x0 + 1.0 * u.grad(th[None, :], x), atol=1e-10)
    with pytest.raises(ValueError):
        strat_reg_atlas_response(x0, th, 3.0, u)


@given(st.floats(0, 5), st.floats(0, 5))
def test_strat_reg_coupled_shift_exact(b1, b2):
    X0 = np.random.default_rng(0).standard_normal((20, 3))
    th = np.array([0.3, -0.4, 0.5])
    d = strat_reg_atlas_response(X0, th, b1) - strat_reg_atlas_response(X0, th, b2)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), abs(b1 - b2) * np.linalg.norm(th), rtol=1e-12, atol=1e-14)


def test_strat_class_atlas_examples():
    gen = np.random.default_rng(0)
    X0 = gen.standard_normal((2000, 2))
    y = np.zeros(2000)
    atlas = StratClassAtlas(X0, y, 0.0, 2.0)
    th = np.array([[0.6, 0.8]])
    z = atlas.sample(0.0, np.tile(th, (50, 1)), np.random.default_rng(1))
    idx_gen = np.random.default_rng(1)
    idx = idx_gen.integers(0, 2000, 50)
    np.testing.assert_array_equal(z[:, :2], X0[idx])
    true = StratClassMap(X0, y, 0.7)
    np.testing.assert_array_equal(atlas.sample(0.7, np.tile(th, (50, 1)), np.random.default_rng(5)),
                                  true.sample(np.tile(th, (50, 1)), np.random.default_rng(5)))
    # base projections uniform on [-1, 1]: P[x0'theta in [-0.2, 0)] = 0.1
    U = np.random.default_rng(2).uniform(-1, 1, (10_000, 1))
    ua = StratClassAtlas(U, np.zeros(10_000), 0.0, 1.0)
    zs = ua.sample(0.2, np.ones((10_000, 1)), np.random.default_rng(3))
    assert np.mean(zs[:, 0] == 0.0) == pytest.approx(0.1, abs=0.01)
    with pytest.raises(ValueError):
        atlas.sample(3.0, th, gen)


def test_aux_atlases():
    gen = np.random.default_rng(0)
    X0 = gen.standard_normal((500, 2))
    y0 = np.ones(500)
    th = np.array([0.5, -0.5])
    mix = MixtureAtlas([ProphecyAtlas(X0, y0).as_map(0.0), OutcomesAtlas(X0, y0).as_map(1.0)])
    a = aux_atlas_sample(mix, [1.0, 0.0], th, 7, m=200)
    b = aux_atlas_sample(ProphecyAtlas(X0, y0), 0.0, th, 7, m=200)
    assert a.shape == b.shape and np.all(a[:, -1] == 1.0)
    with pytest.raises(ValueError):
        aux_atlas_sample(mix, [0.7, 0.7], th, 0)
    p = aux_atlas_sample(ProphecyAtlas(X0, y0), 1.0, th, 1, m=300)
    np.testing.assert_allclose(p[:, -1], p[:, :2] @ th)
    o = aux_atlas_sample(OutcomesAtlas(X0, y0), 0.5, th, 1, m=300)
    np.testing.assert_allclose(o[:, -1] - 1.0, 0.5 * (o[:, :2] @ th))


def test_mc_risk_examples():
    est, se = atlas_plug_in_risk_mc(CoinAtlas(), 0.3, [0.875], squared_loss(), 1_000_000, RngStream(0))
    assert abs(est - 0.19375) <= 3 * se
    la = LocationAtlas(2)
    beta = LocationParams(np.eye(2) * 0.5, np.ones(2))
    est, se = atlas_plug_in_risk_mc(la, beta, [0.1, 0.2], squared_loss(), 100, 0)
    assert se == 0.0 and est == pytest.approx(la.risk(beta, np.array([0.1, 0.2]), squared_loss()))
    est, se = atlas_plug_in_risk_mc(CoinAtlas(), 0.2, [0.5], squared_loss(), 2, 0)
    assert np.isfinite(est) and se >= 0
    with pytest.raises(ValueError):
        atlas_plug_in_risk_mc(CoinAtlas(), 0.2, [0.5], squared_loss(), 1, 0)


@pytest.mark.parametrize("case", list(gradient_cases(3)), ids=lambda c: c[0])
def test_closed_form_gradients(case):
    _, fg, ball = case
    for th in np.atleast_2d(ball.sample(np.random.default_rng(1), 100)):
        g = fg(th)[1]
        num = central_diff(lambda t: fg(t)[0], th)
        assert np.linalg.norm(num - g) <= 1e-5 * max(np.linalg.norm(g), 1e-8)


@pytest.mark.parametrize("case", list(mc_cases()), ids=lambda c: c[0])
def test_closed_form_matches_monte_carlo(case):
    # 100 independent 3-SE checks: a correct estimator misses about 0.27 of them on average,
    # so allow up to 3 (binomial 99.9% quantile) and also require calibrated z-scores
    _, exact, mc, ball = case
    z = []
    for i, th in enumerate(np.atleast_2d(ball.sample(np.random.default_rng(5), 100))):
        est, se = mc(th, 5000, RngStream(17, path=(i,)))
        z.append((est - exact(th)) / se)
    z = np.array(z)
    assert np.sum(np.abs(z) > 3) <= 3
    assert abs(z.mean()) < 0.4 and 0.7 < z.std() < 1.3
