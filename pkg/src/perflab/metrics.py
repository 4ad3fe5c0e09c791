"""Risk estimation, empirical distances and sup-gaps over a parameter grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm, qmc

from .core import LossFn, ParamBall, RngLike, SampleLedger, as_generator, mean_and_se
from .maps import exact_risk

__all__ = [
    "GridEvaluationError",
    "SupGap",
    "ball_grid",
    "error_decomposition",
    "excess_risk",
    "performative_risk",
    "performative_risk_mc",
    "sup_gap_on_grid",
    "tv_empirical",
    "wasserstein1_empirical",
]


class GridEvaluationError(RuntimeError):
    def __init__(self, point, cause):
        self.point = np.asarray(point)
        self.cause = cause
        super().__init__(f"risk evaluation failed at theta={self.point.tolist()}: {cause!r}")


def performative_risk_mc(
    true_map, theta, loss: LossFn, m: int, rng: RngLike, ledger: Optional[SampleLedger] = None
) -> tuple[float, float]:
    """Mean loss and standard error over ``m`` fresh draws from ``D(theta)``.

    Draws go to ``ledger`` when given; pass an evaluation ledger, not a method's.
    """
    m = int(m)
    if m < 2:
        raise ValueError(f"need m >= 2 draws, got {m}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    z = true_map.sample(np.tile(theta, (m, 1)), as_generator(rng))
    if ledger is not None:
        ledger.charge(m)
    vals = loss(z, theta)
    return mean_and_se(vals)


def performative_risk(true_map, theta, loss: LossFn, m: int = 100_000, rng: RngLike = 0) -> tuple[float, float]:
    """Exact risk with zero error when the map provides one, else the Monte-Carlo estimate."""
    r = exact_risk(true_map, theta, loss)
    if r is not None:
        return float(r), 0.0
    return performative_risk_mc(true_map, theta, loss, m, rng)


def excess_risk(true_map, loss: LossFn, theta_hat, oracle, m: int = 100_000, rng: RngLike = 0,
                exact: bool = True) -> float:
    """``PR(theta_hat) - PR(theta_PO)``, unclipped.

    ``oracle`` is ``(theta_PO, PR(theta_PO))`` or an object unpacking to it.
    With ``exact=True`` the map's closed-form risk is used when it has one.
    """
    if oracle is None:
        raise ValueError("excess risk needs a precomputed oracle for the scenario")
    _, pr_opt = oracle
    if exact:
        pr, _ = performative_risk(true_map, theta_hat, loss, m, rng)
    else:
        pr, _ = performative_risk_mc(true_map, theta_hat, loss, m, rng)
    return float(pr - pr_opt)


def _project_samples(a, direction) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return a
    if direction is None:
        raise ValueError("multivariate samples need a projection direction")
    return a @ np.asarray(direction, dtype=float)


def wasserstein1_empirical(a, b, direction=None) -> float:
    """Exact 1-Wasserstein distance between equal-size empirical laws on the line."""
    a = np.sort(_project_samples(a, direction))
    b = np.sort(_project_samples(b, direction))
    if a.shape != b.shape:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty samples")
    return float(np.mean(np.abs(a - b)))


def _fd_bins(x: np.ndarray, cap: int) -> int:
    q75, q25 = np.percentile(x, [75, 25])
    width = 2.0 * (q75 - q25) / np.cbrt(x.size)
    span = x.max() - x.min()
    if width <= 0 or span <= 0:
        return 2
    return int(min(max(np.ceil(span / width), 2), cap))


def tv_empirical(a, b, bins: Optional[int] = None, direction=None, cap: int = 512) -> float:
    """Half the L1 distance between normalized histograms on a common binning.

    ``bins`` defaults to the Freedman-Diaconis rule on the pooled sample, capped at
    ``cap``.  Finer bins inflate the estimate through sampling noise, coarser
    bins hide differences within a bin.
    """
    a = _project_samples(a, direction)
    b = _project_samples(b, direction)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty samples")
    pooled = np.concatenate([a, b])
    if bins is None:
        bins = _fd_bins(pooled, cap)
    if bins < 2:
        raise ValueError("need at least 2 bins")
    lo, hi = pooled.min(), pooled.max()
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, int(bins) + 1)
    ha, _ = np.histogram(a, edges)
    hb, _ = np.histogram(b, edges)
    return float(0.5 * np.abs(ha / a.size - hb / b.size).sum())


def ball_grid(ball: ParamBall, points_1d: int = 401, n_quasi: int = 512, seed: int = 0) -> np.ndarray:
    """Evaluation points in the ball.

    One dimension: ``points_1d`` uniform points across the interval.  Higher
    dimensions: ``n_quasi`` scrambled-Sobol points pushed to the ball (normal
    quantiles for direction, ``u^(1/d)`` for radius), fixed ``seed``.
    """
    c, R, d = ball.center_array, ball.radius, ball.dim
    if d == 1:
        return np.linspace(c[0] - R, c[0] + R, points_1d)[:, None]
    u = qmc.Sobol(d + 1, scramble=True, seed=seed).random(n_quasi)
    g = norm.ppf(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    pts = c + R * g * u[:, d : d + 1] ** (1.0 / d)
    return ball.project(pts)


@dataclass(frozen=True)
class SupGap:
    value: float
    argmax: np.ndarray
    n_points: int

    def __float__(self) -> float:
        return self.value


def sup_gap_on_grid(
    risk_a: Callable[[np.ndarray], float],
    risk_b: Callable[[np.ndarray], float],
    ball: ParamBall,
    points_1d: int = 401,
    n_quasi: int = 512,
    seed: int = 0,
) -> SupGap:
    """``max |risk_a - risk_b|`` over :func:`ball_grid`; underestimates the true sup."""
    pts = ball_grid(ball, points_1d, n_quasi, seed)
    gaps = np.empty(pts.shape[0])
    for i, p in enumerate(pts):
        try:
            gaps[i] = abs(float(risk_a(p)) - float(risk_b(p)))
        except Exception as err:
            raise GridEvaluationError(p, err) from err
        if not np.isfinite(gaps[i]):
            raise GridEvaluationError(p, "non-finite risk")
    k = int(np.argmax(gaps))
    return SupGap(float(gaps[k]), pts[k], pts.shape[0])


def error_decomposition(true_risk, star_risk, hat_risk, ball: ParamBall, **grid) -> dict:
    """Misspecification and statistical sup-gaps and the implied excess-risk bound.

    ``true_risk`` is ``PR``, ``star_risk`` the plug-in risk at the population
    atlas parameter, ``hat_risk`` the plug-in risk at the fitted one.
    """
    mis = sup_gap_on_grid(star_risk, true_risk, ball, **grid)
    stat = sup_gap_on_grid(star_risk, hat_risk, ball, **grid)
    return {"misspec": mis.value, "stat": stat.value, "bound": 2.0 * (mis.value + stat.value),
            "grid_points": mis.n_points}
