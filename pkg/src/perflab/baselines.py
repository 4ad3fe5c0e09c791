"""Model-agnostic baselines: one-point DFO, greedy SGD and PerfGD.

All three start from ``center + R * 1_d / sqrt(d)``, use step sizes
``c0 / (t + 1)``, consume ``m`` true samples per iteration and project back
onto the parameter ball.  For the location map with squared loss the DFO and
SGD loops dispatch to fused kernels (compiled when available) that consume
the same random streams as the generic path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from .core import LossFn, ParamBall, RngLike, SampleLedger, _split, sample_unit_sphere
from .maps import LocationQuadMap

__all__ = [
    "BaselineDiverged",
    "IterateTrace",
    "default_grid",
    "default_theta0",
    "dfo_gradient_estimate",
    "dfo_run",
    "greedy_sgd_run",
    "iters_for_budget",
    "perfgd_run",
    "run_with_budget",
    "tune_baseline",
]


class BaselineDiverged(FloatingPointError):
    def __init__(self, message: str, trace: "IterateTrace"):
        self.trace = trace
        super().__init__(f"{message} (method={trace.method}, last theta={trace.final.tolist()})")


@dataclass
class IterateTrace:
    method: str
    thetas: np.ndarray
    samples: np.ndarray
    hyperparams: dict
    flags: list = field(default_factory=list)
    leftover: int = 0
    backend: str = "generic"

    @property
    def final(self) -> np.ndarray:
        return self.thetas[-1]

    @property
    def consumed(self) -> int:
        return int(self.samples[-1])

    @property
    def ts(self) -> np.ndarray:
        return np.arange(self.thetas.shape[0])

    def rows(self):
        """``(t, theta..., samples)`` rows for CSV dumps."""
        for t, th, s in zip(self.ts, self.thetas, self.samples):
            yield [int(t), *th.tolist(), int(s)]


def default_theta0(ball: ParamBall) -> np.ndarray:
    return ball.project(ball.center_array + ball.radius * np.ones(ball.dim) / np.sqrt(ball.dim))


def iters_for_budget(n: int, m: int) -> tuple[int, int]:
    """Iterations affordable with ``n`` samples at batch ``m``, and the discarded remainder."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    return n // m, n % m


def _fusable(true_map, loss: LossFn) -> bool:
    return isinstance(true_map, LocationQuadMap) and loss.name == "squared"


def _c(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=float)


def _finish(method, thetas, m, hyper, flags, ledger, backend, bad=-1):
    T = thetas.shape[0] - 1
    samples = np.arange(T + 1) * m
    if ledger is not None:
        ledger.charge(T * m + (m if bad >= 0 else 0))
    trace = IterateTrace(method, thetas, samples, hyper, flags, 0, backend)
    if bad >= 0:
        trace.samples = np.append(samples, samples[-1] + m)
        trace.thetas = np.vstack([thetas, thetas[-1]])
        raise BaselineDiverged(f"non-finite gradient estimate at iteration {bad}", trace)
    return trace


def _iterate_ball(true_map, ball: ParamBall, delta: float) -> ParamBall:
    # maps with a restricted domain need every query theta + delta*u to stay inside it
    if getattr(true_map, "domain", None) is not None:
        return ball.shrink(delta)
    return ball


def _dfo_terms(true_map, loss: LossFn, theta: np.ndarray, U: np.ndarray, delta: float,
               gen: np.random.Generator) -> np.ndarray:
    q = theta + delta * U
    z = true_map.sample(q, gen)
    return loss(z, q)[:, None] * U * (theta.size / delta)


def dfo_gradient_estimate(true_map, loss: LossFn, theta, delta: float, m: int, rng: RngLike) -> tuple:
    """Mean and standard error of ``m`` one-point estimates ``(d / delta) u l(z; theta + delta u)``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    gen_dirs, gen_obs = _split(rng, "directions", "observe")
    terms = _dfo_terms(true_map, loss, theta, sample_unit_sphere(theta.size, gen_dirs, int(m)), delta, gen_obs)
    return terms.mean(axis=0), terms.std(axis=0, ddof=1) / np.sqrt(m)


def dfo_run(
    true_map,
    loss: LossFn,
    ball: ParamBall,
    c0: float,
    m: int,
    delta: float,
    iters: int,
    rng: RngLike,
    ledger: Optional[SampleLedger] = None,
    theta0=None,
    fused: Optional[bool] = None,
) -> IterateTrace:
    """One-point sphere-smoothed gradient descent.

    Each step draws ``m`` pairs ``(u, z)`` with ``u`` uniform on the sphere and
    ``z ~ D(theta + delta u)``, and moves along
    ``-(d / delta) mean(u * l(z; theta + delta u))``.
    """
    if delta <= 0 or m < 1 or iters < 0:
        raise ValueError("need delta > 0, m >= 1, iters >= 0")
    d = ball.dim
    feasible = _iterate_ball(true_map, ball, delta)
    theta = feasible.project(default_theta0(ball) if theta0 is None else theta0)
    gen_dirs, gen_obs = _split(rng, "directions", "observe")
    U = sample_unit_sphere(d, gen_dirs, (iters, m)).reshape(iters, m, d)
    hyper = {"c0": c0, "m": m, "delta": delta, "iters": iters}
    if fused is None:
        fused = _fusable(true_map, loss)
    if fused and d == true_map.dim_theta and feasible is ball:
        Z = true_map.sigma * gen_obs.standard_normal((iters, m, d))
        thetas, bad = _backend.K.location_dfo_loop(
            _c(theta), _c(true_map.b), _c(true_map.M1), _c(true_map.M2), float(true_map.s), float(c0),
            float(delta), _c(ball.center_array), float(ball.radius), _c(U), _c(Z),
        )
        return _finish("dfo", np.asarray(thetas), m, hyper, [], ledger, _backend.BACKEND, bad)
    thetas = np.empty((iters + 1, d))
    thetas[0] = theta
    for t in range(iters):
        g = _dfo_terms(true_map, loss, theta, U[t], delta, gen_obs).mean(axis=0)
        if not np.all(np.isfinite(g)):
            return _finish("dfo", thetas[: t + 1], m, hyper, [], ledger, "generic", t)
        theta = feasible.project(theta - (c0 / (t + 1.0)) * g)
        thetas[t + 1] = theta
    return _finish("dfo", thetas, m, hyper, [], ledger, "generic")


def greedy_sgd_run(
    true_map,
    loss: LossFn,
    ball: ParamBall,
    c0: float,
    m: int,
    iters: int,
    rng: RngLike,
    ledger: Optional[SampleLedger] = None,
    theta0=None,
    fused: Optional[bool] = None,
) -> IterateTrace:
    """Repeated retraining: gradient of the loss at fresh ``z ~ D(theta_t)``, ignoring ``dz/dtheta``."""
    if loss.grad_theta is None:
        raise ValueError(f"greedy SGD needs a loss gradient; {loss.name!r} has none")
    if m < 1 or iters < 0:
        raise ValueError("need m >= 1, iters >= 0")
    d = ball.dim
    theta = ball.project(default_theta0(ball) if theta0 is None else theta0)
    (gen_obs,) = _split(rng, "observe")
    hyper = {"c0": c0, "m": m, "iters": iters}
    if fused is None:
        fused = _fusable(true_map, loss)
    if fused:
        Z = true_map.sigma * gen_obs.standard_normal((iters, m, d))
        thetas, bad = _backend.K.location_sgd_loop(
            _c(theta), _c(true_map.b), _c(true_map.M1), _c(true_map.M2), float(true_map.s), float(c0),
            _c(ball.center_array), float(ball.radius), _c(Z),
        )
        return _finish("sgd", np.asarray(thetas), m, hyper, [], ledger, _backend.BACKEND, bad)
    thetas = np.empty((iters + 1, d))
    thetas[0] = theta
    for t in range(iters):
        z = true_map.sample(np.tile(theta, (m, 1)), gen_obs)
        g = loss.grad_theta(z, theta).mean(axis=0)
        if not np.all(np.isfinite(g)):
            return _finish("sgd", thetas[: t + 1], m, hyper, [], ledger, "generic", t)
        theta = ball.project(theta - (c0 / (t + 1.0)) * g)
        thetas[t + 1] = theta
    return _finish("sgd", thetas, m, hyper, [], ledger, "generic")


def _window_jacobian(window_t: list, window_z: list, ridge: float, min_step: float,
                     noise_se: Optional[float] = None, se_max: float = 1.0) -> Optional[np.ndarray]:
    """Ridge regression of mean differences on deployment differences (latest entry as anchor).

    Returns ``None`` when the window is degenerate: every step below ``min_step``,
    or (given the batch-mean noise ``noise_se``) an estimate whose standard
    error ``noise_se * sqrt(2) / s_min`` exceeds ``se_max``.
    """
    dth = np.array(window_t[:-1]) - window_t[-1]
    dz = np.array(window_z[:-1]) - window_z[-1]
    if dth.shape[0] == 0 or np.max(np.linalg.norm(dth, axis=1)) < min_step:
        return None
    if noise_se is not None:
        s_min = np.linalg.svd(dth, compute_uv=False)[-1] if dth.shape[0] >= dth.shape[1] else 0.0
        if s_min == 0.0 or noise_se * np.sqrt(2.0) / s_min > se_max:
            return None
    A = dth.T @ dth + ridge * np.eye(dth.shape[1])
    return np.linalg.solve(A, dth.T @ dz).T  # (d_z, d_theta)


def perfgd_run(
    true_map,
    loss: LossFn,
    ball: ParamBall,
    c0: float,
    m: int,
    iters: int,
    rng: RngLike,
    ledger: Optional[SampleLedger] = None,
    theta0=None,
    sigma_est: Optional[float] = None,
    burn_in: Optional[int] = None,
    window: Optional[int] = None,
    ridge: float = 1e-6,
    min_step: float = 1e-8,
    se_max: float = np.inf,
) -> IterateTrace:
    """Performative gradient descent under a Gaussian location assumption.

    After ``burn_in`` (default ``10 d``) greedy steps, the mean-shift Jacobian
    ``df/dtheta`` is estimated from the last ``window`` (default ``d + 1``)
    distinct deployments and the step uses
    ``E[grad_theta l] + (df/dtheta)^T E[grad_z l]``.

    ``sigma_est`` is the per-coordinate noise scale; when omitted it is the
    pooled within-batch standard deviation so far (needs ``m >= 2``).  Windows
    whose steps are all below ``min_step`` fall back to a greedy step, as do
    windows whose Jacobian standard error exceeds ``se_max`` (off by default);
    those iterations are flagged in the trace.
    """
    if loss.grad_theta is None or loss.grad_z is None:
        raise ValueError(f"PerfGD needs theta- and z-gradients of the loss; {loss.name!r} lacks one")
    d = ball.dim
    H = 10 * d if burn_in is None else int(burn_in)
    k = d + 1 if window is None else int(window)
    theta = ball.project(default_theta0(ball) if theta0 is None else theta0)
    (gen_obs,) = _split(rng, "observe")
    thetas = np.empty((iters + 1, d))
    thetas[0] = theta
    hist_t: list = []
    hist_z: list = []
    hist_c: list = []
    flags: list = []
    var_sum, var_n = 0.0, 0
    hyper = {"c0": c0, "m": m, "iters": iters, "burn_in": H, "window": k, "ridge": ridge,
             "sigma_est": sigma_est, "se_max": se_max}
    for t in range(iters):
        z = true_map.sample(np.tile(theta, (m, 1)), gen_obs)
        zbar = z.mean(axis=0)
        if m >= 2:
            var_sum += float(z.var(axis=0, ddof=1).mean())
            var_n += 1
        if hist_t and np.array_equal(hist_t[-1], theta):
            c = hist_c[-1]
            hist_z[-1] = (hist_z[-1] * c + zbar) / (c + 1)
            hist_c[-1] = c + 1
        else:
            hist_t.append(theta.copy())
            hist_z.append(zbar)
            hist_c.append(1)
            if len(hist_t) > k:
                del hist_t[0], hist_z[0], hist_c[0]
        g = loss.grad_theta(z, theta).mean(axis=0)
        if t < H:
            flags.append((t, "burn_in"))
        else:
            sig = sigma_est if sigma_est is not None else (np.sqrt(var_sum / var_n) if var_n else None)
            noise_se = None if sig is None or not np.isfinite(se_max) else sig / np.sqrt(m * min(hist_c))
            J = _window_jacobian(hist_t, hist_z, ridge, min_step, noise_se, se_max) if len(hist_t) == k else None
            if J is None:
                flags.append((t, "fallback_greedy"))
            else:
                g = g + J.T @ loss.grad_z(z, theta).mean(axis=0)
        if not np.all(np.isfinite(g)):
            return _finish("perfgd", thetas[: t + 1], m, hyper, flags, ledger, "generic", t)
        theta = ball.project(theta - (c0 / (t + 1.0)) * g)
        thetas[t + 1] = theta
    return _finish("perfgd", thetas, m, hyper, flags, ledger, "generic")


RUNNERS: dict[str, Callable] = {"dfo": dfo_run, "sgd": greedy_sgd_run, "perfgd": perfgd_run}


def default_grid(method: str, points: int = 5) -> dict[str, list]:
    """Logarithmic hyperparameter grids over the default search ranges."""
    batch = sorted({int(round(v)) for v in np.logspace(0, np.log10(500), points)})
    if method == "dfo":
        return {"c0": np.logspace(-4, -1, points).tolist(), "m": batch, "delta": np.logspace(-1, 2, points).tolist()}
    if method in ("sgd", "perfgd"):
        return {"c0": np.logspace(-4, 1, points).tolist(), "m": batch}
    raise ValueError(f"no grid for method {method!r}")


def run_with_budget(method: str, true_map, loss, ball, n: int, hyper: dict, rng: RngLike,
                    ledger: Optional[SampleLedger] = None) -> IterateTrace:
    """Run a baseline on ``floor(n / m)`` iterations of batch ``m``.

    The ``n mod m`` leftover samples are unused; they are charged to ``ledger``
    as discarded (so it ends at exactly ``n``) and recorded on the trace.
    """
    m = int(hyper["m"])
    iters, leftover = iters_for_budget(n, m)
    kw = {k: v for k, v in hyper.items() if k not in ("m", "iters")}
    trace = RUNNERS[method](true_map, loss, ball, m=m, iters=iters, rng=rng, ledger=ledger, **kw)
    trace.leftover = leftover
    if ledger is not None and leftover:
        ledger.charge(leftover)
    return trace


def tune_baseline(
    method: str,
    true_map,
    loss: LossFn,
    ball: ParamBall,
    n: int,
    score: Callable[[np.ndarray], float],
    rng: RngLike,
    grid: Optional[dict] = None,
    ledger: Optional[SampleLedger] = None,
) -> tuple[dict, list]:
    """Grid search scored by ``score(final theta)`` (lower is better).

    Tuning samples go to ``ledger`` (a tuning ledger, never a method ledger).
    Cells whose batch exceeds ``n`` and cells that diverge are skipped.
    Returns the best hyperparameters and the full ``(hyper, score)`` table.
    """
    grid = grid or default_grid(method)
    keys = sorted(grid)
    table = []
    best, best_score = None, np.inf
    for values in itertools.product(*(grid[k] for k in keys)):
        hyper = dict(zip(keys, values))
        if int(hyper["m"]) > n:
            continue
        try:
            trace = run_with_budget(method, true_map, loss, ball, n, hyper, rng, ledger)
        except BaselineDiverged:
            table.append((hyper, np.nan))
            continue
        s = float(score(trace.final))
        table.append((hyper, s))
        if s < best_score:
            best, best_score = hyper, s
    if best is None:
        raise RuntimeError(f"every {method} grid cell failed")
    return best, table
