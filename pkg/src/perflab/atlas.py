"""Parametric distribution atlases ``{D_beta}``: the learner's models of the map.

Every atlas samples ``z ~ D_beta(theta)``.  Atlases whose plug-in risk
``PR^beta(theta) = E_{z ~ D_beta(theta)} l(z; theta)`` integrates in closed
form for a given loss implement ``risk_grad(beta, theta, loss)``, which is
what the deterministic plug-in optimizer needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _backend
from ._solvers import Box, Simplex
from .core import LossFn, ParamBall, RngLike, as_2d_thetas, as_generator, mean_and_se
from .maps import _check_unit, _draw_base, _stack, budget_response, linear_shift

__all__ = [
    "AtlasMember",
    "CoinAtlas",
    "ConcaveQuadraticUtility",
    "ConvergenceError",
    "LinearUtility",
    "LocationAtlas",
    "LocationParams",
    "MixtureAtlas",
    "OutcomesAtlas",
    "ProphecyAtlas",
    "StratClassAtlas",
    "StratRegAtlas",
    "atlas_plug_in_risk_mc",
    "coin_plug_in_argmin",
    "coin_plug_in_risk",
    "location_atlas_risk",
    "strat_reg_atlas_response",
]

COIN_BETA_MAX = 0.5 - 1e-6


class ConvergenceError(RuntimeError):
    pass


class Atlas:
    """Common surface.  Subclasses set ``kind``, ``box``, ``dim_theta``, ``dim_z``."""

    kind: str = "atlas"
    box: Box | Simplex
    domain: Optional[ParamBall] = None

    def sample(self, beta, thetas, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def supports(self, loss: LossFn) -> bool:
        """Whether ``risk_grad`` is available for ``loss``."""
        return False

    def risk_grad(self, beta, theta, loss: LossFn) -> tuple[float, np.ndarray]:
        raise NotImplementedError(f"{self.kind} atlas has no closed-form risk for loss {loss.name!r}")

    def risk(self, beta, theta, loss: LossFn) -> float:
        return self.risk_grad(beta, theta, loss)[0]

    def risk_offset(self, beta) -> float:
        """Constant dropped from ``risk`` (zero unless documented otherwise)."""
        return 0.0

    def as_map(self, beta) -> "AtlasMember":
        return AtlasMember(self, beta)


@dataclass(frozen=True)
class AtlasMember:
    """A fixed atlas member ``D_beta`` packaged as a samplable map (synthetic draws)."""

    atlas: Atlas
    beta: object

    @property
    def dim_theta(self) -> int:
        return self.atlas.dim_theta

    @property
    def dim_z(self) -> int:
        return self.atlas.dim_z

    @property
    def domain(self):
        return self.atlas.domain

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        return self.atlas.sample(self.beta, thetas, gen)

    def performative_risk(self, theta, loss: LossFn) -> float:
        if not self.atlas.supports(loss):
            exact = getattr(self.atlas, "exact_risk", None)
            if exact is None:
                raise NotImplementedError(loss.name)
            return exact(self.beta, theta, loss)
        return self.atlas.risk(self.beta, theta, loss) + self.atlas.risk_offset(self.beta)


def atlas_plug_in_risk_mc(atlas: Atlas, beta, theta, loss: LossFn, m: int, rng: RngLike) -> tuple[float, float]:
    """Monte-Carlo plug-in risk from ``m`` synthetic draws: ``(mean, standard error)``.

    Synthetic draws never touch a sample ledger.
    """
    if int(m) < 2:
        raise ValueError(f"need m >= 2 synthetic draws, got {m}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    z = atlas.sample(beta, np.tile(theta, (int(m), 1)), as_generator(rng))
    vals = loss(z, theta)
    return mean_and_se(vals)


# ---------------------------------------------------------------------------
# coin


def _check_coin(beta: float, theta=None) -> None:
    if not 0.0 <= beta < 0.5:
        raise ValueError(f"coin atlas parameter must lie in [0, 0.5), got {beta}")
    if theta is not None and np.any((np.asarray(theta) < 0) | (np.asarray(theta) > 1)):
        raise ValueError(f"coin deployments must lie in [0, 1], got {theta}")


def coin_plug_in_risk(beta: float, theta: float) -> float:
    """``p - 2 p theta + theta^2`` with ``p = 0.5 + beta * theta`` (squared loss)."""
    _check_coin(beta, theta)
    p = 0.5 + beta * theta
    return p - 2.0 * p * theta + theta * theta


def coin_plug_in_argmin(beta: float) -> float:
    """Minimizer of the coin plug-in risk over ``[0, 1]``."""
    _check_coin(beta)
    stationary = (1.0 - beta) / (2.0 - 4.0 * beta)
    if 0.0 <= stationary <= 1.0:
        return stationary
    r0, r1 = coin_plug_in_risk(beta, 0.0), coin_plug_in_risk(beta, 1.0)
    return 0.0 if r0 <= r1 else 1.0


class CoinAtlas(Atlas):
    """``D_beta(theta) = Bern(0.5 + beta * theta)``."""

    kind = "coin"

    def __init__(self, beta_max: float = COIN_BETA_MAX):
        self.box = Box.interval(0.0, beta_max)
        self.domain = ParamBall(1, 0.5, (0.5,))
        self.dim_theta = 1
        self.dim_z = 1

    def sample(self, beta, thetas, gen):
        b = float(np.asarray(beta).reshape(-1)[0])
        t = as_2d_thetas(thetas, 1)[:, 0]
        return (gen.random(t.size) < 0.5 + b * t).astype(float)[:, None]

    def supports(self, loss):
        return loss.grad_theta is not None

    def risk_grad(self, beta, theta, loss):
        # z is binary, so the expectation is a two-point sum for any loss
        b = float(np.asarray(beta).reshape(-1)[0])
        th = np.asarray(theta, dtype=float).reshape(1)
        p = 0.5 + b * th[0]
        one, zero = np.ones((1, 1)), np.zeros((1, 1))
        l1, l0 = float(loss(one, th)[0]), float(loss(zero, th)[0])
        g1 = loss.grad_theta(one, th)[0]
        g0 = loss.grad_theta(zero, th)[0]
        value = p * l1 + (1 - p) * l0
        grad = b * (l1 - l0) + p * g1 + (1 - p) * g0
        return value, np.atleast_1d(grad)


# ---------------------------------------------------------------------------
# location family


@dataclass(frozen=True)
class LocationParams:
    """Shift matrix ``M`` (``d_z x |I'|``) and intercept ``b``."""

    M: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "M", np.atleast_2d(np.asarray(self.M, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.M.ravel(), self.b])

    @classmethod
    def from_vector(cls, v, d_z: int, k: int) -> "LocationParams":
        v = np.asarray(v, dtype=float)
        return cls(v[: d_z * k].reshape(d_z, k), v[d_z * k :])


def location_atlas_risk(M, b, theta, columns: Optional[Sequence[int]] = None) -> float:
    """``||b + M theta_{I'} - theta||^2``; the noise variance is omitted."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    sub = theta if columns is None else theta[list(columns)]
    if M.shape[1] != sub.size or M.shape[0] != b.size or b.size != theta.size:
        raise ValueError(f"dimension mismatch: M {M.shape}, b {b.shape}, theta {theta.shape}")
    r = b + M @ sub - theta
    return float(r @ r)


class LocationAtlas(Atlas):
    """``z = b + M theta_{I'} + z0`` with Gaussian base noise of scale ``noise_scale``."""

    kind = "location"

    def __init__(self, dim_theta: int, dim_z: Optional[int] = None, columns=None, intercept: bool = True,
                 noise_scale: float = 0.0):
        self.dim_theta = int(dim_theta)
        self.dim_z = int(dim_z or dim_theta)
        self.columns = None if columns is None else tuple(int(c) for c in columns)
        if self.columns is not None and not set(self.columns) <= set(range(self.dim_theta)):
            raise ValueError(f"columns {self.columns} out of range for dimension {self.dim_theta}")
        self.intercept = bool(intercept)
        self.noise_scale = float(noise_scale)
        k = self.n_columns
        self.box = Box.unbounded(self.dim_z * k + self.dim_z)

    @property
    def n_columns(self) -> int:
        return self.dim_theta if self.columns is None else len(self.columns)

    def with_noise(self, noise_scale: float) -> "LocationAtlas":
        return LocationAtlas(self.dim_theta, self.dim_z, self.columns, self.intercept, noise_scale)

    def _params(self, beta) -> LocationParams:
        if isinstance(beta, LocationParams):
            return beta
        return LocationParams.from_vector(beta, self.dim_z, self.n_columns)

    def embed(self, beta) -> np.ndarray:
        """Full ``d_z x d_theta`` matrix with zeros in omitted columns."""
        p = self._params(beta)
        if self.columns is None:
            return p.M
        P = np.zeros((self.dim_z, self.dim_theta))
        P[:, list(self.columns)] = p.M
        return P

    def mean(self, beta, thetas) -> np.ndarray:
        p = self._params(beta)
        t = as_2d_thetas(thetas, self.dim_theta)
        return p.b + t @ self.embed(p).T

    def sample(self, beta, thetas, gen):
        mu = self.mean(beta, thetas)
        if self.noise_scale == 0.0:
            return mu
        return mu + self.noise_scale * gen.standard_normal(mu.shape)

    def supports(self, loss):
        return loss.name == "squared" and self.dim_z == self.dim_theta

    def risk_grad(self, beta, theta, loss):
        if not self.supports(loss):
            return super().risk_grad(beta, theta, loss)
        p = self._params(beta)
        theta = np.asarray(theta, dtype=float).reshape(-1)
        P = self.embed(p)
        A = P - np.eye(self.dim_theta)
        r = p.b + A @ theta
        return float(r @ r), 2.0 * A.T @ r

    def risk_offset(self, beta) -> float:
        return self.dim_z * self.noise_scale**2


# ---------------------------------------------------------------------------
# strategic regression


@dataclass(frozen=True)
class LinearUtility:
    """``u_theta(x) = theta' x`` (optionally restricted to manipulable coordinates)."""

    mask: Optional[np.ndarray] = None
    lipschitz: float = field(default=0.0, init=False)

    def grad(self, thetas, x) -> np.ndarray:
        th = np.broadcast_to(thetas, np.shape(x))
        return th if self.mask is None else th * self.mask


@dataclass(frozen=True)
class ConcaveQuadraticUtility:
    """``u_theta(x) = theta' x - (c / 2) ||x||^2``; gradient is ``c``-Lipschitz."""

    c: float

    @property
    def lipschitz(self) -> float:
        return self.c

    def grad(self, thetas, x) -> np.ndarray:
        return thetas - self.c * x


def strat_reg_atlas_response(x0, theta, beta: float, utility=None, tol: float = 1e-10,
                             max_iter: int = 100) -> np.ndarray:
    """Best response ``argmax_x u_theta(x) - ||x - x0||^2 / (2 beta)``.

    Linear utility has the exact answer ``x0 + beta * theta``; otherwise the
    first-order condition ``x = x0 + beta * grad u(x)`` is iterated, which
    contracts when ``beta * L_u < 1``.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    theta = np.asarray(theta, dtype=float)
    utility = utility or LinearUtility()
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if beta * utility.lipschitz >= 1:
        raise ValueError(f"beta * L_u = {beta * utility.lipschitz} >= 1: response map is not contractive")
    if isinstance(utility, LinearUtility):
        return linear_shift(x0, theta, beta, utility.mask)
    x = x0.copy()
    for _ in range(max_iter):
        x_new = x0 + beta * utility.grad(theta, x)
        res = float(np.max(np.abs(x_new - x)))
        x = x_new
        if res <= tol:
            return x
    raise ConvergenceError(f"best response did not converge in {max_iter} iterations (residual {res:.3g})")


class StratRegAtlas(Atlas):
    """``(x0, y) ~ D0``, ``x = g_beta(x0, theta)``, labels unchanged."""

    kind = "strat_reg"

    def __init__(self, X0, y, beta_min: float = 0.0, beta_max: float = 10.0, utility=None):
        self.X0 = np.ascontiguousarray(X0, dtype=float)
        self.y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1))
        self.utility = utility or LinearUtility()
        if beta_max * self.utility.lipschitz >= 1:
            raise ValueError("need beta_max * L_u < 1")
        self.box = Box.interval(beta_min, beta_max)
        self.dim_theta = self.X0.shape[1]
        self.dim_z = self.dim_theta + 1
        mask = getattr(self.utility, "mask", None)
        self._mask = np.ones(self.dim_theta) if mask is None else np.ascontiguousarray(mask, dtype=float)

    def respond(self, x0, thetas, beta) -> np.ndarray:
        return strat_reg_atlas_response(x0, thetas, float(beta), self.utility)

    def sample(self, beta, thetas, gen):
        b = float(np.asarray(beta).reshape(-1)[0])
        t = as_2d_thetas(thetas, self.dim_theta)
        idx = _draw_base(self.X0, t.shape[0], gen)
        return _stack(self.respond(self.X0[idx], t, b), self.y[idx])

    def supports(self, loss):
        linear = isinstance(self.utility, LinearUtility)
        return linear and loss.grad_theta is not None and loss.grad_z is not None

    def risk_grad(self, beta, theta, loss):
        if not self.supports(loss):
            return super().risk_grad(beta, theta, loss)
        b = float(np.asarray(beta).reshape(-1)[0])
        theta = np.ascontiguousarray(theta, dtype=float).reshape(-1)
        if loss.name == "logistic_ridge":
            return _backend.K.strat_reg_risk_grad(self.X0, self.y, theta, b, self._mask, loss.params["lam"])
        return self._risk_grad_generic(b, theta, loss)

    def _risk_grad_generic(self, b: float, theta: np.ndarray, loss: LossFn):
        # x = x0 + b * (theta o mask): total derivative adds b * mask o grad_x
        z = _stack(linear_shift(self.X0, theta[None, :], b, self._mask), self.y)
        value = float(loss(z, theta).mean())
        gz = loss.grad_z(z, theta)[:, : self.dim_theta]
        grad = loss.grad_theta(z, theta).mean(axis=0) + b * self._mask * gz.mean(axis=0)
        return value, grad


# ---------------------------------------------------------------------------
# strategic classification


class StratClassAtlas(Atlas):
    """Agents within distance ``beta`` of the boundary move onto it."""

    kind = "strat_class"

    def __init__(self, X0, y, T: float = 0.0, beta_max: float = 2.0):
        self.X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        self.y = np.asarray(y, dtype=float).reshape(-1)
        self.T = float(T)
        self.box = Box.interval(0.0, beta_max)
        self.dim_theta = self.X0.shape[1]
        self.dim_z = self.dim_theta + 1

    def _beta(self, beta) -> float:
        b = float(np.asarray(beta).reshape(-1)[0])
        if not self.box.contains(b):
            raise ValueError(f"budget {b} outside [0, {self.box.upper[0]}]")
        return b

    def sample(self, beta, thetas, gen):
        b = self._beta(beta)
        t = as_2d_thetas(thetas, self.dim_theta)
        _check_unit(t)
        idx = _draw_base(self.X0, t.shape[0], gen)
        return _stack(budget_response(self.X0[idx], t, b, self.T), self.y[idx])

    def population(self, beta, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float).reshape(1, -1)
        _check_unit(t)
        return _stack(budget_response(self.X0, t, self._beta(beta), self.T), self.y)

    def exact_risk(self, beta, theta, loss: LossFn) -> float:
        """Finite-base plug-in risk (no gradient: the response is discontinuous)."""
        return float(loss(self.population(beta, theta), np.asarray(theta, dtype=float).reshape(-1)).mean())


# ---------------------------------------------------------------------------
# auxiliary atlases


def _linear_predictor(thetas, x):
    return np.einsum("ij,ij->i", x, np.broadcast_to(thetas, x.shape))


class MixtureAtlas(Atlas):
    """``D_beta(theta) = sum_i beta_i D^(i)(theta)`` with ``beta`` on the simplex."""

    kind = "mixture"

    def __init__(self, components: Sequence):
        if len(components) < 1:
            raise ValueError("need at least one component")
        dz = {c.dim_z for c in components}
        dt = {c.dim_theta for c in components}
        if len(dz) != 1 or len(dt) != 1:
            raise ValueError("components must share dimensions")
        self.components = list(components)
        self.box = Simplex(len(components))
        self.dim_z = dz.pop()
        self.dim_theta = dt.pop()

    def weights(self, beta) -> np.ndarray:
        w = np.asarray(beta, dtype=float).reshape(-1)
        if w.size != len(self.components) or not self.box.contains(w, tol=1e-9):
            raise ValueError(f"mixture weights {w.tolist()} are off the simplex")
        w = np.clip(w, 0.0, None)
        return w / w.sum()

    def sample(self, beta, thetas, gen):
        w = self.weights(beta)
        t = as_2d_thetas(thetas, self.dim_theta)
        which = gen.choice(len(w), size=t.shape[0], p=w)
        out = np.empty((t.shape[0], self.dim_z))
        for i, comp in enumerate(self.components):
            sel = which == i
            if sel.any():
                out[sel] = comp.sample(t[sel], gen)
        return out


class ProphecyAtlas(Atlas):
    """Labels are replaced by the prediction ``f_theta(x)`` with probability ``beta``."""

    kind = "prophecy"

    def __init__(self, X0, y0, predictor: Optional[Callable] = None):
        self.X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        self.y0 = np.asarray(y0, dtype=float).reshape(-1)
        self.predictor = predictor or _linear_predictor
        self.box = Box.interval(0.0, 1.0)
        self.dim_theta = self.X0.shape[1]
        self.dim_z = self.dim_theta + 1

    def sample(self, beta, thetas, gen):
        b = float(np.asarray(beta).reshape(-1)[0])
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"prophecy weight must lie in [0, 1], got {b}")
        t = as_2d_thetas(thetas, self.dim_theta)
        idx = _draw_base(self.X0, t.shape[0], gen)
        x = self.X0[idx]
        flip = gen.random(t.shape[0]) < b
        y = np.where(flip, self.predictor(t, x), self.y0[idx])
        return _stack(x, y)


class OutcomesAtlas(Atlas):
    """Additive performative outcomes ``y = y0 + beta * f_theta(x)``; features are static."""

    kind = "outcomes"

    def __init__(self, X0, y0, predictor: Optional[Callable] = None):
        self.X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        self.y0 = np.asarray(y0, dtype=float).reshape(-1)
        self.predictor = predictor or _linear_predictor
        self.box = Box.unbounded(1)
        self.dim_theta = self.X0.shape[1]
        self.dim_z = self.dim_theta + 1

    def sample(self, beta, thetas, gen):
        b = float(np.asarray(beta).reshape(-1)[0])
        t = as_2d_thetas(thetas, self.dim_theta)
        idx = _draw_base(self.X0, t.shape[0], gen)
        x = self.X0[idx]
        return _stack(x, self.y0[idx] + b * self.predictor(t, x))


def aux_atlas_sample(atlas: Atlas, beta, theta, rng: RngLike, m: int = 1) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    return atlas.sample(beta, np.tile(theta, (int(m), 1)), as_generator(rng))
