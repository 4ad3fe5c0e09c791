import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from perflab.atlas import coin_plug_in_risk
from perflab.core import ParamBall, RngStream, SampleLedger, squared_loss
from perflab.maps import CoinMap, ConstantMap, LocationQuadMap
from perflab.metrics import (
    GridEvaluationError,
    ball_grid,
    error_decomposition,
    excess_risk,
    performative_risk_mc,
    sup_gap_on_grid,
    tv_empirical,
    wasserstein1_empirical,
)
from perflab.optimize import OracleResult
from perflab.selftest import coin_decomposition_trials

COIN_BALL = ParamBall(1, 0.5, (0.5,))
ORACLE = OracleResult(np.array([0.875]), 0.19375, "exact")


def test_risk_mc_examples():
    est, se = performative_risk_mc(CoinMap(0.3), [0.875], squared_loss(), 1_000_000, RngStream(0))
    assert abs(est - 0.19375) <= 3 * se
    est, se = performative_risk_mc(ConstantMap([0.2]), [0.5], squared_loss(), 50, 0)
    assert se == 0.0 and est == pytest.approx(0.09)
    est, se = performative_risk_mc(CoinMap(0.3), [0.0], squared_loss(), 100_000, RngStream(1))
    assert abs(est - 0.5) <= 3 * se
    led = SampleLedger(None, "evaluation")
    performative_risk_mc(CoinMap(0.3), [0.5], squared_loss(), 100, 0, led)
    assert led.consumed == 100
    with pytest.raises(ValueError):
        performative_risk_mc(CoinMap(0.3), [0.5], squared_loss(), 1, 0)


def test_excess_risk_examples():
    cm = CoinMap(0.3)
    assert excess_risk(cm, squared_loss(), [0.875], ORACLE) == pytest.approx(0.0, abs=1e-15)
    assert excess_risk(cm, squared_loss(), [5 / 7], ORACLE) == pytest.approx(0.4 * (0.875 - 5 / 7) ** 2, abs=1e-12)
    mc = excess_risk(cm, squared_loss(), [0.875], ORACLE, m=200_000, rng=3, exact=False)
    assert abs(mc) <= 3 * np.sqrt(0.19 * 0.81 / 200_000) * 2
    with pytest.raises(ValueError):
        excess_risk(cm, squared_loss(), [0.5], None)


def test_excess_risk_worst_grid_point():
    grid = np.linspace(0, 1, 41)
    ex = [excess_risk(CoinMap(0.3), squared_loss(), [t], ORACLE) for t in grid]
    worst = int(np.argmax(ex))
    assert all(ex[worst] >= e for e in ex)


def test_w1_examples():
    a = np.random.default_rng(0).standard_normal(100)
    assert wasserstein1_empirical(a, a) == 0.0
    assert wasserstein1_empirical(a, a + 0.7) == pytest.approx(0.7)
    assert wasserstein1_empirical([0, 1], [0, 2]) == 0.5
    with pytest.raises(ValueError):
        wasserstein1_empirical([0, 1], [0, 1, 2])


pairs = st.integers(1, 30).flatmap(lambda k: st.tuples(*[arrays(np.float64, k, elements=st.floats(-100, 100))] * 3))


@given(pairs)
def test_w1_is_a_metric(abc):
    a, b, c = abc
    assert wasserstein1_empirical(a, b) == pytest.approx(wasserstein1_empirical(b, a), abs=1e-12)
    assert wasserstein1_empirical(a, c) <= wasserstein1_empirical(a, b) + wasserstein1_empirical(b, c) + 1e-12
    assert wasserstein1_empirical(a, b) >= 0


def test_w1_direction_projection():
    X = np.random.default_rng(1).standard_normal((200, 3))
    u = np.array([0.0, 0.6, 0.8])
    assert wasserstein1_empirical(X, X + 0.5 * u, direction=u) == pytest.approx(0.5)


def test_tv_examples():
    gen = np.random.default_rng(0)
    a = gen.random(100_000)
    assert tv_empirical(a, a) == 0.0
    assert tv_empirical(np.zeros(50), np.ones(50) * 5) == pytest.approx(1.0)
    assert tv_empirical(a, gen.random(100_000) + 0.5, bins=100) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        tv_empirical([], [1.0])
    with pytest.raises(ValueError):
        tv_empirical([0.0, 1.0], [0.5], bins=1)


def test_ball_grid_shapes():
    assert ball_grid(ParamBall(1)).shape == (401, 1)
    g = ball_grid(ParamBall(3))
    assert g.shape == (512, 3) and np.all(np.linalg.norm(g, axis=1) <= 1 + 1e-12)
    np.testing.assert_array_equal(g, ball_grid(ParamBall(3)))


def test_sup_gap_examples():
    f = lambda t: float(t[0] ** 2)  # noqa: E731
    assert sup_gap_on_grid(f, f, COIN_BALL).value == 0.0
    cm = CoinMap(0.3, 0.2)
    gap = sup_gap_on_grid(lambda t: coin_plug_in_risk(0.45, t[0]), lambda t: cm.performative_risk(t, squared_loss()),
                          COIN_BALL)
    assert gap.value >= 0.05 - 1e-12 and gap.n_points == 401
    well = CoinMap(0.3)
    assert sup_gap_on_grid(lambda t: coin_plug_in_risk(0.3, t[0]),
                           lambda t: well.performative_risk(t, squared_loss()), COIN_BALL).value < 1e-15

    def broken(t):
        raise RuntimeError("boom")

    with pytest.raises(GridEvaluationError):
        sup_gap_on_grid(f, broken, COIN_BALL)


@given(st.floats(0.01, 0.45), st.floats(0, 1), st.floats(0, 0.4999), st.floats(0, 1))
def test_coin_tv_corollary(mu, frac, beta, theta):
    # |PR^b - PR| <= 2 B TV with B = 1 and the exact Bernoulli TV
    cm = CoinMap(mu, frac * (0.5 - mu))
    gap = abs(coin_plug_in_risk(beta, theta) - cm.performative_risk(np.array([theta]), squared_loss()))
    tv = abs(0.5 + beta * theta - float(cm.prob(theta)))
    assert gap <= 2 * tv + 1e-12


def test_decomposition_bound_holds():
    rows = coin_decomposition_trials(configs=30, seed=5)
    assert all(r["excess"] <= r["bound"] for r in rows)


def test_error_decomposition_fields():
    lm = LocationQuadMap.generate(2, 0.3, 0.0, seed=0)
    f = lambda t: lm.performative_risk(t, squared_loss())  # noqa: E731
    out = error_decomposition(f, lambda t: f(t) + 0.1, lambda t: f(t) + 0.15, ParamBall(2))
    assert out["misspec"] == pytest.approx(0.1) and out["stat"] == pytest.approx(0.05)
    assert out["bound"] == pytest.approx(0.3)
