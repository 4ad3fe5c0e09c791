import numpy as np
import pytest
from hypothesis import given, strategies as st

from perflab.core import RngStream, squared_loss
from perflab.maps import (
    CoinMap,
    ConstantMap,
    LocationQuadMap,
    StratClassMap,
    StrategicRhoMap,
    budget_response,
    contaminate,
    draw,
    make_logistic_base,
    strategic_rho_response,
)
from perflab.atlas import StratRegAtlas


@pytest.mark.parametrize("mu, eta, theta, p", [(0.3, 0.0, 0.0, 0.5), (0.3, 0.1, 1.0, 0.9), (0.3, 0.1, 0.5, 0.675)])
def test_coin_probability(mu, eta, theta, p):
    assert CoinMap(mu, eta).prob(theta) == pytest.approx(p, abs=1e-15)


def test_coin_validation():
    with pytest.raises(ValueError):
        CoinMap(0.6)
    with pytest.raises(ValueError):
        CoinMap(0.3, 0.3)
    CoinMap(0.3, 0.2)  # boundary: p(1) = 1
    with pytest.raises(ValueError):
        CoinMap(0.3).sample(np.array([[1.5]]), np.random.default_rng(0))


@given(st.floats(0.01, 0.49), st.floats(0, 1), st.floats(0, 1))
def test_coin_probability_valid(mu, frac, theta):
    m = CoinMap(mu, frac * (0.5 - mu))
    assert 0.0 <= m.prob(theta) <= 1.0


def test_coin_exact_risk_matches_closed_form():
    m = CoinMap(0.3)
    for t in np.linspace(0, 1, 11):
        p = 0.5 + 0.3 * t
        assert m.performative_risk(np.array([t]), squared_loss()) == pytest.approx(p - 2 * p * t + t * t)


def test_location_examples():
    m = LocationQuadMap.generate(4, 0.0, 0.0, seed=3)
    gen = np.random.default_rng(0)
    np.testing.assert_array_equal(m.sample(np.zeros((1, 4)), gen)[0], m.b)
    th = gen.standard_normal((10, 4))
    np.testing.assert_allclose(m.sample(th, gen) - m.b, th @ m.M1.T, atol=1e-12)
    scalar = LocationQuadMap([0.0], [[1.0]], [[1.0]], 0.5, 0.0)
    assert scalar.sample(np.array([[0.8]]), gen)[0, 0] == pytest.approx(1.12)
    with pytest.raises(ValueError):
        LocationQuadMap(np.zeros(2), np.eye(3), np.eye(3))


def test_location_generation_normalized_and_reproducible():
    a, b = LocationQuadMap.generate(5, 0.5, seed=11), LocationQuadMap.generate(5, 0.5, seed=11)
    np.testing.assert_array_equal(a.M1, b.M1)
    assert np.linalg.norm(a.M1, 2) == pytest.approx(1.0) and np.linalg.norm(a.M2, 2) == pytest.approx(1.0)


def test_location_noise_isotropic():
    m = LocationQuadMap.generate(3, 0.0, 0.5, seed=0)
    z = draw(m, np.zeros(3), 200_000, 1) - m.b
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=0.01)
    np.testing.assert_allclose(np.cov(z.T), 0.25 * np.eye(3), atol=0.01)


def test_rho_response_examples():
    x0 = np.array([[0.2, -1.0]])
    th = np.array([[0.5, -0.25]])
    np.testing.assert_array_equal(strategic_rho_response(x0, th, 2.0, 2.0), x0 + 2.0 * th)
    np.testing.assert_array_equal(strategic_rho_response(x0, np.zeros((1, 2)), 2.0, 3.0), x0)
    assert strategic_rho_response([0.0], [0.375], 2.0, 3.0)[0] == pytest.approx(np.sqrt(0.5))
    with pytest.raises(ValueError):
        strategic_rho_response(x0, th, 2.0, 1.0)


@given(st.floats(1.1, 4), st.floats(0.1, 3), st.floats(-1, 1))
def test_rho_response_solves_first_order_condition(rho, bt, theta):
    x = strategic_rho_response(np.array([0.0]), np.array([theta]), bt, rho)[0]
    # d/dx [theta x - |x|^rho / (2 bt)] = 0
    assert theta - rho * np.sign(x) * abs(x) ** (rho - 1) / (2 * bt) == pytest.approx(0, abs=1e-9)


def test_rho2_map_bit_identical_to_atlas():
    X0, y, _ = make_logistic_base(300, 5, 0)
    th = np.random.default_rng(1).standard_normal((50, 5)) / 3
    a = StrategicRhoMap(X0, y, 2.0, 2.0).sample(th, np.random.default_rng(4))
    b = StratRegAtlas(X0, y).sample(2.0, th, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_budget_response_examples():
    th = np.array([[0.6, 0.8]])
    u = th[0]
    T, beta = 0.3, 0.5
    assert budget_response((T - beta / 2) * u[None, :], th, beta, T)[0] @ u == pytest.approx(T, abs=1e-12)
    for proj in (T + 0.1, T - beta - 0.1):
        x0 = proj * u[None, :]
        np.testing.assert_array_equal(budget_response(x0, th, beta, T), x0)


def test_strat_class_band_emptiness():
    gen = np.random.default_rng(0)
    X0 = gen.standard_normal((20_000, 2))
    m = StratClassMap(X0, np.zeros(len(X0)), 0.5, 0.2)
    th = np.array([0.28, 0.96])
    z = draw(m, th, 20_000, 3)
    proj = z[:, :2] @ th
    assert not np.any((proj >= 0.2 - 0.5) & (proj < 0.2 - 1e-9))
    assert np.mean(np.abs(proj - 0.2) < 1e-9) > 0.1
    with pytest.raises(ValueError):
        m.sample(np.array([[1.0, 1.0]]), gen)


def test_contamination_examples():
    zero, one = ConstantMap([0.0]), ConstantMap([1.0])
    th = np.zeros((100_000, 1))
    base = LocationQuadMap.generate(1, 0.0, 0.5, seed=0)
    alt = LocationQuadMap.generate(1, 0.0, 0.5, seed=1)
    for p, ref in ((0.0, base), (1.0, alt)):
        a = contaminate(base, p, alt).sample(th[:50], np.random.default_rng(2))
        np.testing.assert_array_equal(a, ref.sample(th[:50], np.random.default_rng(2)))
    z = contaminate(zero, 0.1, one).sample(th, np.random.default_rng(0))
    assert z.mean() == pytest.approx(0.1, abs=0.01)
    with pytest.raises(ValueError):
        contaminate(zero, 1.5, one)


def test_rng_stream_drives_maps_reproducibly():
    m = CoinMap(0.3, 0.1)
    a = draw(m, [0.4], 100, RngStream(3))
    b = draw(m, [0.4], 100, RngStream(3))
    np.testing.assert_array_equal(a, b)
