"""Map fitting: estimate the atlas parameter from deployment data.

Closed-form least-squares fitters cover the coin, strategic-regression and
location atlases; the budget model uses boundary-mass matching; anything else
goes through :func:`fit_erm_projected_gd`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._solvers import Box, Simplex, projected_gradient_descent
from .atlas import COIN_BETA_MAX, LocationParams
from .core import Dataset

__all__ = [
    "FitResult",
    "SingularDesignError",
    "fit_budget_boundary_mass",
    "fit_coin_ls",
    "fit_erm_projected_gd",
    "fit_location_ls",
    "fit_scalar_beta_ls",
    "gaussian_strat_reg_objective",
    "mixture_moment_objective",
    "outcomes_moment_objective",
    "prophecy_moment_objective",
]


class SingularDesignError(np.linalg.LinAlgError):
    pass


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, LocationParams):
        return {"M": v.M.tolist(), "b": v.b.tolist()}
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class FitResult:
    beta: object
    objective: float
    iterations: int = 0
    clamped: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def beta_vector(self) -> np.ndarray:
        if isinstance(self.beta, LocationParams):
            return self.beta.to_vector()
        return np.atleast_1d(np.asarray(self.beta, dtype=float))

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta": _jsonable(self.beta),
                "objective": self.objective,
                "iterations": self.iterations,
                "clamped": self.clamped,
                **{k: _jsonable(v) for k, v in self.diagnostics.items()},
            },
            sort_keys=True,
        )


def _clamp(value: float, lo: float, hi: float) -> tuple[float, bool]:
    c = min(max(value, lo), hi)
    return c, c != value


def fit_coin_ls(data: Dataset, beta_max: float = COIN_BETA_MAX) -> FitResult:
    """``argmin_beta mean (z - 0.5 - beta theta)^2`` in closed form, clamped to the coin box."""
    t = data.thetas[:, 0]
    z = data.zs[:, 0]
    den = float(t @ t)
    if den == 0.0:
        raise SingularDesignError("all deployments are zero; beta is not identified")
    raw = float(t @ (z - 0.5)) / den
    beta, clamped = _clamp(raw, 0.0, beta_max)
    obj = float(np.mean((z - 0.5 - beta * t) ** 2))
    return FitResult(beta, obj, 0, clamped, {"raw_beta": raw, "n": data.n})


def fit_scalar_beta_ls(
    data: Dataset,
    grad_u: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    beta_min: float = 0.0,
    beta_max: float = np.inf,
    n_features: Optional[int] = None,
) -> FitResult:
    """``argmin_beta mean ||x_i - beta g_i||^2`` with ``g_i = grad u_{theta_i}(x_i)``.

    ``x`` is the first ``n_features`` columns of each observation (default:
    all but the last, i.e. observations ``(x, y)``).  The default utility is
    linear, ``g_i = theta_i``.
    """
    k = data.dim_z - 1 if n_features is None else n_features
    x = data.zs[:, :k]
    g = data.thetas if grad_u is None else np.asarray(grad_u(data.thetas, x), dtype=float)
    den = float(np.einsum("ij,ij->", g, g))
    if den == 0.0:
        raise SingularDesignError("all utility gradients vanish; beta is not identified")
    raw = float(np.einsum("ij,ij->", x, g)) / den
    beta, clamped = _clamp(raw, beta_min, beta_max)
    obj = float(np.mean(np.sum((x - beta * g) ** 2, axis=1)))
    return FitResult(beta, obj, 0, clamped, {"raw_beta": raw, "n": data.n})


def fit_location_ls(
    data: Dataset,
    columns: Optional[Sequence[int]] = None,
    intercept: bool = True,
    cond_limit: float = 1e12,
) -> FitResult:
    """Least squares ``z ~ b + M theta_{I'}`` via the normal equations."""
    phi = data.thetas if columns is None else data.thetas[:, list(columns)]
    k = phi.shape[1]
    if intercept:
        phi = np.hstack([phi, np.ones((data.n, 1))])
    gram = phi.T @ phi
    if data.n < phi.shape[1] or np.linalg.cond(gram) > cond_limit:
        raise SingularDesignError(f"design Gram matrix is singular (n={data.n}, parameters per output={phi.shape[1]})")
    coef = np.linalg.solve(gram, phi.T @ data.zs)  # (k [+1], d_z) = M^T stacked over b
    M = coef[:k].T
    b = coef[k] if intercept else np.zeros(data.dim_z)
    resid = data.zs - phi @ coef
    obj = float(np.mean(np.sum(resid**2, axis=1)))
    dof = max(data.n - phi.shape[1], 1)
    noise = float(np.sqrt(np.sum(resid**2) / (dof * data.dim_z)))
    return FitResult(
        LocationParams(M, b),
        obj,
        0,
        False,
        {"n": data.n, "columns": None if columns is None else list(columns), "intercept": intercept,
         "noise_scale": noise, "gram_cond": float(np.linalg.cond(gram))},
    )


def _check_band_prob(fn: Callable[[float], float], beta_max: float, grid: int = 257) -> None:
    bs = np.linspace(0.0, beta_max, grid)
    vals = np.array([fn(b) for b in bs])
    if abs(vals[0]) > 1e-12:
        raise ValueError(f"base band probability at 0 must be 0, got {vals[0]}")
    if np.any(np.diff(vals) < -1e-12):
        raise ValueError("base band probability must be nondecreasing")


def fit_budget_boundary_mass(
    data: Dataset,
    base_band_prob: Callable[[float], float],
    T: float = 0.0,
    eps: float = 0.01,
    beta_max: float = 2.0,
    n_features: Optional[int] = None,
    tol: float = 1e-10,
) -> FitResult:
    """Match the observed mass near the boundary to the base band probability.

    ``q = mean 1{|x_i' theta_i - T| <= eps}``; returns ``beta`` solving
    ``base_band_prob(beta) = q`` by bisection, clamped at ``beta_max``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    _check_band_prob(base_band_prob, beta_max)
    k = data.dim_z - 1 if n_features is None else n_features
    proj = np.einsum("ij,ij->i", data.zs[:, :k], data.thetas)
    q = float(np.mean(np.abs(proj - T) <= eps))
    diag = {"q_hat": q, "eps": eps, "T": T, "n": data.n}
    if q <= 0.0:
        return FitResult(0.0, 0.0, 0, False, diag)
    if q > base_band_prob(beta_max):
        return FitResult(beta_max, q - base_band_prob(beta_max), 0, True, diag)
    lo, hi = 0.0, beta_max
    it = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if base_band_prob(mid) < q:
            lo = mid
        else:
            hi = mid
        it += 1
    beta = 0.5 * (lo + hi)
    return FitResult(beta, abs(base_band_prob(beta) - q), it, False, diag)


Objective = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def fit_erm_projected_gd(
    data: Dataset,
    r: Objective,
    box: Box | Simplex,
    beta0=None,
    max_iters: int = 10_000,
    tol: float = 1e-10,
    step0: float = 1.0,
) -> FitResult:
    """``argmin_{beta in B} mean r(theta_i, z_i; beta)`` by projected gradient descent.

    ``r(thetas, zs, beta)`` returns per-sample values ``(n,)`` and gradients
    ``(n, d_beta)``.  Starts from the box centre unless ``beta0`` is given and
    returns the best iterate found.
    """

    def fun(beta):
        vals, grads = r(data.thetas, data.zs, beta)
        return float(np.mean(vals)), np.asarray(grads, dtype=float).reshape(data.n, -1).mean(axis=0)

    start = box.center() if beta0 is None else np.atleast_1d(np.asarray(beta0, dtype=float))
    # NonFiniteError propagates with the iterate dump
    res = projected_gradient_descent(fun, start, box.project, tol=tol, max_iters=max_iters, step0=step0)
    beta = box.project(res.x)
    clamped = bool(isinstance(box, Box) and np.any((beta <= box.lower) | (beta >= box.upper)))
    return FitResult(
        beta,
        res.fun,
        res.iterations,
        clamped,
        {"converged": res.converged, "pg_norm": res.pg_norm, "initial_objective": res.f0, "n": data.n},
    )


# ---------------------------------------------------------------------------
# ERM objectives for atlases without closed-form fitters


def coin_ls_objective(thetas, zs, beta):
    res = zs[:, 0] - 0.5 - beta[0] * thetas[:, 0]
    return res**2, (-2.0 * res * thetas[:, 0])[:, None]


def gaussian_strat_reg_objective(log_density, grad_log_density, grad_u=None):
    """Negative log-likelihood ``-log p0(x - beta grad u_theta(x))`` for a known base density.

    ``log_density(v)`` maps ``(n, d)`` residuals to ``(n,)``; ``grad_log_density``
    returns ``(n, d)``.
    """

    def r(thetas, zs, beta):
        x = zs[:, : thetas.shape[1]]
        g = thetas if grad_u is None else grad_u(thetas, x)
        v = x - beta[0] * g
        vals = -log_density(v)
        grads = np.einsum("ij,ij->i", grad_log_density(v), g)[:, None]
        return vals, grads

    return r


def outcomes_moment_objective(y0_mean: float, predictor=None):
    """Squared moment residual ``(y - mean(y0) - beta f_theta(x))^2``."""

    def r(thetas, zs, beta):
        x, y = zs[:, :-1], zs[:, -1]
        f = np.einsum("ij,ij->i", x, thetas) if predictor is None else predictor(thetas, x)
        res = y - y0_mean - beta[0] * f
        return res**2, (-2.0 * res * f)[:, None]

    return r


def prophecy_moment_objective(y0_mean: float, predictor=None):
    """Squared moment residual ``(y - (1 - beta) mean(y0) - beta f_theta(x))^2``."""

    def r(thetas, zs, beta):
        x, y = zs[:, :-1], zs[:, -1]
        f = np.einsum("ij,ij->i", x, thetas) if predictor is None else predictor(thetas, x)
        res = y - (1 - beta[0]) * y0_mean - beta[0] * f
        return res**2, (-2.0 * res * (f - y0_mean))[:, None]

    return r


def mixture_moment_objective(component_means: Sequence[Callable[[np.ndarray], np.ndarray]]):
    """``||z - sum_k beta_k mu_k(theta)||^2`` given each component's mean map."""

    def r(thetas, zs, beta):
        mus = np.stack([mu(thetas) for mu in component_means], axis=-1)  # (n, d_z, k)
        res = zs - mus @ beta
        vals = np.sum(res**2, axis=1)
        grads = -2.0 * np.einsum("ij,ijk->ik", res, mus)
        return vals, grads

    return r
