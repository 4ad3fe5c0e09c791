import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from perflab.core import (
    BudgetExceeded,
    Dataset,
    MapFailure,
    ParamBall,
    RngStream,
    SampleLedger,
    check_loss_gradient,
    deploy_and_collect,
    logistic_ridge_loss,
    project_ball,
    sample_uniform_ball,
    squared_loss,
    zero_one_loss,
)
from perflab.maps import CoinMap, LocationQuadMap

vec = arrays(np.float64, st.integers(1, 6), elements=st.floats(-50, 50))


@pytest.mark.parametrize("x, out", [([0, 0], [0, 0]), ([3, 4], [0.6, 0.8]), ([0.3, 0.4], [0.3, 0.4])])
def test_project_ball_examples(x, out):
    np.testing.assert_allclose(project_ball(np.array(x, float), 1.0), out, atol=1e-15)


@given(vec, st.floats(0, 5))
def test_projection_idempotent_and_inside(x, R):
    p = project_ball(x, R)
    assert np.linalg.norm(p) <= R * (1 + 1e-12) + 1e-300
    np.testing.assert_allclose(project_ball(p, R), p, atol=1e-12)


@given(st.integers(1, 6).flatmap(lambda d: st.tuples(
    arrays(np.float64, d, elements=st.floats(-20, 20)), arrays(np.float64, d, elements=st.floats(-20, 20)))))
def test_projection_nonexpansive(pair):
    x, y = pair
    assert np.linalg.norm(project_ball(x, 1.0) - project_ball(y, 1.0)) <= np.linalg.norm(x - y) + 1e-12


def test_uniform_ball_examples():
    d1 = sample_uniform_ball(ParamBall(1), RngStream(1), 100_000)
    assert abs(d1.mean()) < 0.02 and np.all(np.abs(d1) <= 1)
    d5 = sample_uniform_ball(ParamBall(5), RngStream(2), 20_000)
    assert np.all(np.linalg.norm(d5, axis=1) <= 1.0)
    d2 = sample_uniform_ball(ParamBall(2), RngStream(3), 100_000)
    assert np.mean(np.linalg.norm(d2, axis=1) <= 0.5) == pytest.approx(0.25, abs=0.01)


def test_ball_validation_and_shrink():
    with pytest.raises(ValueError):
        ParamBall(0)
    with pytest.raises(ValueError):
        ParamBall(2, -1.0)
    b = ParamBall(1, 0.5, (0.5,))
    assert b.contains([0.0]) and b.contains([1.0]) and not b.contains([1.01])
    assert b.shrink(0.1).radius == pytest.approx(0.4)


def test_rng_stream_determinism_and_independence():
    a = RngStream(5).child("x").generator().standard_normal(4)
    b = RngStream(5).child("x").generator().standard_normal(4)
    c = RngStream(5).child("y").generator().standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(ValueError):
        RngStream(-1)


def test_deploy_examples():
    m = CoinMap(0.3)
    with pytest.raises(ValueError):
        deploy_and_collect(m, 0, RngStream(0))
    data = deploy_and_collect(m, 10_000, RngStream(0), exploration=lambda g, n: np.zeros((n, 1)))
    assert data.zs.mean() == pytest.approx(0.5, abs=0.02)
    one = deploy_and_collect(m, 500, RngStream(9))
    two = deploy_and_collect(m, 500, RngStream(9))
    assert one.equals(two) and one.n == 500
    assert np.all((one.thetas >= 0) & (one.thetas <= 1))


def test_deploy_charges_ledger_and_enforces_limit():
    lm = LocationQuadMap.generate(3)
    led = SampleLedger(1000)
    deploy_and_collect(lm, 600, RngStream(0), ledger=led)
    assert led.consumed == 600
    with pytest.raises(BudgetExceeded):
        deploy_and_collect(lm, 600, RngStream(1), ledger=led)


def test_deploy_reports_failing_index():
    m = CoinMap(0.3)
    thetas = np.full((20, 1), 0.5)
    thetas[7] = 3.0
    with pytest.raises(MapFailure) as info:
        deploy_and_collect(m, 20, RngStream(0), exploration=lambda g, n: thetas)
    assert info.value.index == 7


def test_dataset_shapes_and_immutability():
    d = Dataset([0.1, 0.2], [1.0, 0.0], 3)
    assert d.dim_theta == 1 and d.dim_z == 1 and len(d) == 2
    with pytest.raises(ValueError):
        d.thetas[0, 0] = 5
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros((2, 1)))


@pytest.mark.parametrize("loss", [squared_loss(), logistic_ridge_loss(1e-3)])
def test_loss_gradients_match_finite_differences(loss):
    gen = np.random.default_rng(0)
    for _ in range(100):
        theta = gen.standard_normal(4)
        if loss.name == "squared":
            z = gen.standard_normal((3, 4))
        else:
            z = np.hstack([gen.standard_normal((3, 4)), gen.integers(0, 2, (3, 1))])
        assert check_loss_gradient(loss, z, theta) <= 1e-5


def test_zero_one_loss_normalizes():
    loss = zero_one_loss(0.0, normalize=True)
    z = np.array([[1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]])
    np.testing.assert_array_equal(loss(z, np.array([3.0, 0.0])), [0.0, 1.0])
    np.testing.assert_array_equal(loss(z, np.array([0.0, 0.0])), [0.0, 1.0])  # zero maps to e1
