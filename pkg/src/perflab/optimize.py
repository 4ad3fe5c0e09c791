"""Plug-in optimization on a fitted atlas, and the ground-truth optimum oracle."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ._solvers import projected_gradient_descent
from .baselines import BaselineDiverged, default_theta0, dfo_run
from .core import LossFn, ParamBall, RngLike, SampleLedger, _split, sample_uniform_ball
from .maps import exact_risk
from .metrics import performative_risk, performative_risk_mc

__all__ = [
    "OracleCache",
    "OracleResult",
    "PlugInResult",
    "plug_in_optimize_gd",
    "plug_in_optimize_sampled",
    "true_optimum_oracle",
]


@dataclass
class PlugInResult:
    theta: np.ndarray
    risk: float
    restarts: list = field(default_factory=list)  # (start, final theta, risk, iterations, converged)

    @property
    def converged(self) -> bool:
        best = min(self.restarts, key=lambda r: r[2])
        return bool(best[4])


def plug_in_optimize_gd(
    atlas,
    beta,
    loss: LossFn,
    ball: ParamBall,
    max_iters: int = 10_000,
    tol: float = 1e-8,
    restarts: int = 5,
    rng: RngLike = 0,
    step0: float = 1.0,
) -> PlugInResult:
    """Projected gradient descent on the closed-form plug-in risk.

    Runs from the ball centre and ``restarts`` uniform draws in the ball and
    keeps the final iterate with the lowest plug-in risk (ties go to the earlier
    start).
    """
    if not atlas.supports(loss):
        raise ValueError(
            f"{atlas.kind} atlas has no closed-form risk for loss {loss.name!r}; use plug_in_optimize_sampled"
        )
    (gen,) = _split(rng, "restarts")
    starts = [ball.center_array.copy()]
    if restarts > 0:
        starts.extend(np.atleast_2d(sample_uniform_ball(ball, gen, restarts)))

    def fun(theta):
        return atlas.risk_grad(beta, theta, loss)

    runs = []
    for x0 in starts:
        res = projected_gradient_descent(fun, x0, ball.project, tol=tol, max_iters=max_iters, step0=step0)
        x = ball.project(res.x)
        runs.append((x0, x, float(atlas.risk(beta, x, loss)), res.iterations, res.converged))
    best = min(range(len(runs)), key=lambda i: (runs[i][2], i))
    return PlugInResult(runs[best][1], runs[best][2], runs)


def plug_in_optimize_sampled(
    atlas,
    beta,
    loss: LossFn,
    ball: ParamBall,
    c0: float = 1.0,
    m_synthetic: int = 1000,
    delta: float = 0.1,
    iters: int = 5000,
    rng: RngLike = 0,
    ledger: Optional[SampleLedger] = None,
) -> PlugInResult:
    """Derivative-free descent on synthetic draws from the fitted atlas member.

    No true samples are used.  ``ledger`` (optional) counts synthetic draws.
    """
    (gen,) = _split(rng, "synthetic")
    trace = dfo_run(atlas.as_map(beta), loss, ball, c0, m_synthetic, delta, iters, gen, ledger)
    theta = trace.final
    risk = float(atlas.risk(beta, theta, loss)) if atlas.supports(loss) else float("nan")
    return PlugInResult(theta, risk, [(trace.thetas[0], theta, risk, iters, True)])


@dataclass
class OracleResult:
    theta: np.ndarray
    risk: float
    mode: str
    budget: int = 0
    seed: int = 0
    flags: list = field(default_factory=list)

    def __iter__(self):
        yield self.theta
        yield self.risk


def _risk_fn(true_map, loss: LossFn, ball: ParamBall, m: int, seed: int):
    if exact_risk(true_map, ball.center_array, loss) is not None:
        return lambda th: float(exact_risk(true_map, th, loss)), True
    # common random numbers: every point reuses the same stream
    return lambda th: performative_risk_mc(true_map, th, loss, m, np.random.default_rng(seed))[0], False


def _grid(ball: ParamBall, points: int) -> np.ndarray:
    c, R = ball.center_array, ball.radius
    axes = [np.linspace(c[i] - R, c[i] + R, points) for i in range(ball.dim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ball.dim)
    return pts[np.linalg.norm(pts - c, axis=1) <= R]


def true_optimum_oracle(
    true_map,
    loss: LossFn,
    ball: ParamBall,
    mode: str = "grid",
    budget: int = 1_000_000,
    seed: int = 0,
    m: int = 100_000,
    grid_points: int = 401,
    restarts: int = 8,
) -> OracleResult:
    """Reference optimum ``(theta_PO, PR(theta_PO))`` for scoring.

    ``grid``: minimum over a uniform grid (``grid_points`` per axis, ``d <= 2``),
    ties to the lowest index; exact risk when the map provides it, else
    Monte-Carlo with ``m`` draws per point on common random numbers.
    ``exact``: multistart SLSQP on the map's closed-form risk under the ball
    constraint.
    ``dfo``: derivative-free descent with ``budget`` true samples (oracle use
    only) split across 3 restarts, best final point by risk.
    """
    d = ball.dim
    if mode == "grid":
        if d > 2:
            raise ValueError(f"grid oracle requires dim <= 2, got {d}")
        f, is_exact = _risk_fn(true_map, loss, ball, m, seed)
        pts = _grid(ball, grid_points)
        vals = np.array([f(p) for p in pts])
        k = int(np.argmin(vals))  # first occurrence on ties
        flags = [] if is_exact else [f"mc_m={m}"]
        return OracleResult(pts[k], float(vals[k]), mode, 0 if is_exact else m * pts.shape[0], seed, flags)
    if mode == "exact":
        f, is_exact = _risk_fn(true_map, loss, ball, m, seed)
        if not is_exact:
            raise ValueError("exact oracle requires a map with closed-form risk")
        gen = np.random.default_rng(seed)
        c, R = ball.center_array, ball.radius
        starts = [c.copy(), default_theta0(ball)]
        starts.extend(np.atleast_2d(sample_uniform_ball(ball, gen, restarts)))
        cons = [{"type": "ineq", "fun": lambda th: R * R - np.sum((th - c) ** 2),
                 "jac": lambda th: -2.0 * (th - c)}]
        best_x, best_f, flags = None, np.inf, []
        for x0 in starts:
            res = minimize(f, x0, method="SLSQP", constraints=cons, options={"ftol": 1e-14, "maxiter": 1000})
            x = ball.project(res.x)
            fx = f(x)
            if not res.success:
                flags.append(f"slsqp:{res.message}")
            if fx < best_f:
                best_x, best_f = x, fx
        return OracleResult(best_x, float(best_f), mode, 0, seed, flags)
    if mode == "dfo":
        per = budget // 3
        m_batch = 100
        iters = per // m_batch
        flags = []
        best = None
        starts = [default_theta0(ball), ball.center_array.copy(),
                  sample_uniform_ball(ball, np.random.default_rng(seed))]
        for i, x0 in enumerate(starts):
            child = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7, i)))
            try:
                tr = dfo_run(true_map, loss, ball, c0=0.05, m=m_batch, delta=0.1, iters=iters, rng=child,
                             theta0=x0)
            except BaselineDiverged as err:
                flags.append(f"restart {i} diverged")
                tr = err.trace
            r, _ = performative_risk(true_map, tr.final, loss, m, seed)
            if best is None or r < best[1]:
                best = (tr.final, r)
            steps = np.linalg.norm(np.diff(tr.thetas[-max(iters // 10, 2):], axis=0), axis=1).sum()
            if steps > 0.05 * ball.radius:
                flags.append(f"restart {i}: budget exhausted before iterates settled")
        return OracleResult(best[0], float(best[1]), mode, 3 * iters * m_batch, seed, flags)
    raise ValueError(f"unknown oracle mode {mode!r}")


class OracleCache:
    """Tab-separated records ``hash, theta (comma-separated), PR, mode, budget, seed``."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._mem: dict[str, OracleResult] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    h, th, pr, mode, budget, seed = line.rstrip("\n").split("\t")
                    theta = np.array([float(v) for v in th.split(",")])
                    self._mem[h] = OracleResult(theta, float(pr), mode, int(budget), int(seed))

    def __contains__(self, key: str) -> bool:
        return key in self._mem

    def get(self, key: str) -> Optional[OracleResult]:
        return self._mem.get(key)

    def put(self, key: str, result: OracleResult) -> None:
        self._mem[key] = result
        if self.path:
            th = ",".join(repr(float(v)) for v in np.atleast_1d(result.theta))
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(f"{key}\t{th}\t{float(result.risk)!r}\t{result.mode}\t{result.budget}\t{result.seed}\n")
