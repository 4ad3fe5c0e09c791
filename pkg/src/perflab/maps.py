"""Ground-truth distribution maps ``D(theta)`` used as black-box simulators.

Maps that are cheap to integrate also expose ``performative_risk(theta,
loss)``, the exact ``E_{z ~ D(theta)} l(z; theta)``; it is only used for
scoring and never by the methods under test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import LossFn, ParamBall, RngLike, as_2d_thetas, as_generator, sample_unit_sphere

__all__ = [
    "CoinMap",
    "ConstantMap",
    "ContaminatedMap",
    "LocationQuadMap",
    "NormalizedDeployment",
    "StratClassMap",
    "StrategicRhoMap",
    "budget_response",
    "contaminate",
    "exact_risk",
    "linear_shift",
    "make_logistic_base",
    "strategic_rho_response",
]

UNIT_TOL = 1e-9


def exact_risk(true_map, theta, loss: LossFn) -> Optional[float]:
    """Exact performative risk if the map can integrate ``loss``, else ``None``."""
    fn = getattr(true_map, "performative_risk", None)
    if fn is None:
        return None
    try:
        return float(fn(np.asarray(theta, dtype=float), loss))
    except NotImplementedError:
        return None


# ---------------------------------------------------------------------------
# biased coin


@dataclass(frozen=True)
class CoinMap:
    """``z ~ Bern(0.5 + mu*theta + eta*theta^2)`` for ``theta in [0, 1]``."""

    mu: float
    eta: float = 0.0
    dim_theta: int = field(default=1, init=False)
    dim_z: int = field(default=1, init=False)

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mu must lie in (0, 0.5), got {self.mu}")
        # the closed upper end keeps p(1) = 1, still a valid coin
        if not (self.eta == 0.0 or 0.0 < self.eta <= 0.5 - self.mu + 1e-12):
            raise ValueError(f"eta must be 0 or lie in (0, {0.5 - self.mu}], got {self.eta}")

    @property
    def domain(self) -> ParamBall:
        return ParamBall(1, 0.5, (0.5,))

    def prob(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        return np.clip(0.5 + self.mu * t + self.eta * t * t, 0.0, 1.0)

    def _check(self, t: np.ndarray) -> np.ndarray:
        if np.any(t < -1e-12) or np.any(t > 1 + 1e-12):
            bad = t[(t < 0) | (t > 1)][0]
            raise ValueError(f"coin deployments must lie in [0, 1], got {bad}")
        return np.clip(t, 0.0, 1.0)

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        t = self._check(as_2d_thetas(thetas, 1)[:, 0])
        return (gen.random(t.size) < self.prob(t)).astype(float)[:, None]

    def performative_risk(self, theta, loss: LossFn) -> float:
        t = self._check(np.atleast_1d(np.asarray(theta, dtype=float)))
        p = float(self.prob(t)[0])
        th = t.reshape(1)
        return p * float(loss(np.ones((1, 1)), th)[0]) + (1 - p) * float(loss(np.zeros((1, 1)), th)[0])


# ---------------------------------------------------------------------------
# location family with a quadratic term


@dataclass(frozen=True)
class LocationQuadMap:
    """``z = b + M1 theta + s M2 (theta o theta) + z0``, ``z0 ~ N(0, sigma^2 I)``."""

    b: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    s: float = 0.0
    sigma: float = 0.5

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        M1 = np.atleast_2d(np.asarray(self.M1, dtype=float))
        M2 = np.atleast_2d(np.asarray(self.M2, dtype=float))
        d = b.size
        if M1.shape != (d, d) or M2.shape != (d, d):
            raise ValueError(f"M1, M2 must be {d}x{d}, got {M1.shape} and {M2.shape}")
        if self.s < 0 or self.sigma < 0:
            raise ValueError("s and sigma must be nonnegative")
        for name, v in (("b", b), ("M1", M1), ("M2", M2)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def generate(cls, d: int, s: float = 0.0, sigma: float = 0.5, seed: int = 0) -> "LocationQuadMap":
        """Draw ``b ~ N(0, I)`` and Gaussian ``M1, M2`` scaled to unit operator norm."""
        gen = np.random.default_rng(seed)
        b = gen.standard_normal(d)
        M1 = gen.standard_normal((d, d))
        M2 = gen.standard_normal((d, d))
        M1 /= np.linalg.norm(M1, 2)
        M2 /= np.linalg.norm(M2, 2)
        return cls(b, M1, M2, s, sigma)

    @property
    def dim_theta(self) -> int:
        return self.b.size

    @property
    def dim_z(self) -> int:
        return self.b.size

    def mean(self, thetas) -> np.ndarray:
        t = as_2d_thetas(thetas, self.dim_theta)
        return self.b + t @ self.M1.T + self.s * (t * t) @ self.M2.T

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        mu = self.mean(thetas)
        return mu + self.sigma * gen.standard_normal(mu.shape)

    def performative_risk(self, theta, loss: LossFn) -> float:
        if loss.name != "squared":
            raise NotImplementedError(loss.name)
        t = np.asarray(theta, dtype=float).reshape(-1)
        r = self.mean(t)[0] - t
        return float(r @ r + self.dim_z * self.sigma**2)


# ---------------------------------------------------------------------------
# strategic responses over a finite base dataset


def make_logistic_base(n: int, d: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Base features ``x ~ N(0, I_d)`` and labels from a logistic model with a unit coefficient."""
    gen = np.random.default_rng(seed)
    coef = sample_unit_sphere(d, gen)
    X = gen.standard_normal((n, d))
    p = 1.0 / (1.0 + np.exp(-(X @ coef)))
    y = (gen.random(n) < p).astype(float)
    return X, y, coef


def _draw_base(X0: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    return gen.integers(0, X0.shape[0], size=k)


def linear_shift(x0: np.ndarray, thetas: np.ndarray, beta: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Best response under linear utility and quadratic cost: ``x0 + beta * theta``."""
    direction = thetas if mask is None else thetas * mask
    return x0 + beta * direction


def strategic_rho_response(x0, theta, beta_tilde: float, rho: float, mask=None) -> np.ndarray:
    """``argmax_x theta'x - ||x - x0||_rho^rho / (2 beta_tilde)``, solved per coordinate."""
    if not rho > 1:
        raise ValueError(f"rho must exceed 1, got {rho}")
    if not beta_tilde > 0:
        raise ValueError(f"beta_tilde must be positive, got {beta_tilde}")
    x0 = np.asarray(x0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = None if mask is None else np.asarray(mask, dtype=float)
    if rho == 2:
        return linear_shift(x0, theta, beta_tilde, m)
    step = np.sign(theta) * (2.0 * beta_tilde * np.abs(theta) / rho) ** (1.0 / (rho - 1.0))
    if m is not None:
        step = step * m
    return x0 + step


def _stack(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate([x, y[:, None]], axis=1)


@dataclass(frozen=True)
class StrategicRhoMap:
    """Agents maximize ``theta'x`` minus an ``l_rho`` manipulation cost; labels unchanged."""

    X0: np.ndarray
    y: np.ndarray
    beta_tilde: float = 2.0
    rho: float = 2.0
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.rho > 1:
            raise ValueError(f"rho must exceed 1, got {self.rho}")
        if not self.beta_tilde > 0:
            raise ValueError("beta_tilde must be positive")
        X0 = np.asarray(self.X0, dtype=float)
        object.__setattr__(self, "X0", X0)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))
        if self.mask is not None:
            object.__setattr__(self, "mask", np.asarray(self.mask, dtype=float).reshape(-1))

    @property
    def dim_theta(self) -> int:
        return self.X0.shape[1]

    @property
    def dim_z(self) -> int:
        return self.X0.shape[1] + 1

    def respond(self, x0, thetas) -> np.ndarray:
        return strategic_rho_response(x0, thetas, self.beta_tilde, self.rho, self.mask)

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        t = as_2d_thetas(thetas, self.dim_theta)
        idx = _draw_base(self.X0, t.shape[0], gen)
        return _stack(self.respond(self.X0[idx], t), self.y[idx])

    def population(self, theta) -> np.ndarray:
        """Every base point's response to ``theta`` (the exact law, uniformly weighted)."""
        t = np.asarray(theta, dtype=float).reshape(1, -1)
        return _stack(self.respond(self.X0, t), self.y)

    def performative_risk(self, theta, loss: LossFn) -> float:
        return float(loss(self.population(theta), np.asarray(theta, dtype=float).reshape(-1)).mean())


def budget_response(x0, thetas, beta: float, T: float = 0.0) -> np.ndarray:
    """Move to the boundary ``x'theta = T`` iff ``x0'theta in [T - beta, T)``."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    thetas = np.asarray(thetas, dtype=float)
    proj = np.einsum("ij,ij->i", x0, np.broadcast_to(thetas, x0.shape))
    move = (proj >= T - beta) & (proj < T)
    shift = np.where(move, T - proj, 0.0)
    return x0 + shift[:, None] * thetas


def _check_unit(thetas: np.ndarray) -> None:
    nrm = np.linalg.norm(thetas, axis=1)
    bad = np.abs(nrm - 1.0) > UNIT_TOL
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"deployment {i} has norm {nrm[i]!r}; decision rules must be unit vectors")


@dataclass(frozen=True)
class StratClassMap:
    """Budget-limited agents facing the rule ``1{theta'x >= T}``."""

    X0: np.ndarray
    y: np.ndarray
    beta_true: float
    T: float = 0.0

    def __post_init__(self):
        if not self.beta_true > 0:
            raise ValueError("beta_true must be positive")
        object.__setattr__(self, "X0", np.atleast_2d(np.asarray(self.X0, dtype=float)))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))

    @property
    def dim_theta(self) -> int:
        return self.X0.shape[1]

    @property
    def dim_z(self) -> int:
        return self.X0.shape[1] + 1

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        t = as_2d_thetas(thetas, self.dim_theta)
        _check_unit(t)
        idx = _draw_base(self.X0, t.shape[0], gen)
        return _stack(budget_response(self.X0[idx], t, self.beta_true, self.T), self.y[idx])

    def population(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float).reshape(1, -1)
        _check_unit(t)
        return _stack(budget_response(self.X0, t, self.beta_true, self.T), self.y)

    def performative_risk(self, theta, loss: LossFn) -> float:
        return float(loss(self.population(theta), np.asarray(theta, dtype=float).reshape(-1)).mean())


def _normalize_rows(thetas: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(thetas, axis=1, keepdims=True)
    e1 = np.zeros_like(thetas)
    e1[:, 0] = 1.0
    return np.where(nrm > 0, thetas / np.where(nrm > 0, nrm, 1.0), e1)


@dataclass(frozen=True)
class NormalizedDeployment:
    """Deploys ``theta / ||theta||`` so ball-valued iterates act as unit decision rules."""

    inner: object

    @property
    def dim_theta(self) -> int:
        return self.inner.dim_theta

    @property
    def dim_z(self) -> int:
        return self.inner.dim_z

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        return self.inner.sample(_normalize_rows(as_2d_thetas(thetas, self.dim_theta)), gen)

    def performative_risk(self, theta, loss: LossFn) -> float:
        t = _normalize_rows(np.asarray(theta, dtype=float).reshape(1, -1))[0]
        fn = getattr(self.inner, "performative_risk", None)
        if fn is None:
            raise NotImplementedError("inner map has no exact risk")
        return fn(t, loss)


# ---------------------------------------------------------------------------
# wrappers


@dataclass(frozen=True)
class ConstantMap:
    """Point mass at ``value`` regardless of the deployment."""

    value: np.ndarray
    dim_theta: int = 1

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_1d(np.asarray(self.value, dtype=float)))

    @property
    def dim_z(self) -> int:
        return self.value.size

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        k = as_2d_thetas(thetas, self.dim_theta).shape[0]
        return np.tile(self.value, (k, 1))

    def performative_risk(self, theta, loss: LossFn) -> float:
        return float(loss(self.value[None, :], np.asarray(theta, dtype=float).reshape(-1))[0])


@dataclass(frozen=True)
class ContaminatedMap:
    """``(1 - p) D(theta) + p D_alt(theta)``, mixed independently per sample."""

    base: object
    alt: object
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"contamination probability must lie in [0, 1], got {self.p}")
        if self.base.dim_z != self.alt.dim_z:
            raise ValueError("maps must share the observation dimension")
        if self.base.dim_theta != self.alt.dim_theta:
            raise ValueError("maps must share the deployment dimension")

    @property
    def dim_theta(self) -> int:
        return self.base.dim_theta

    @property
    def dim_z(self) -> int:
        return self.base.dim_z

    @property
    def domain(self):
        return getattr(self.base, "domain", None)

    def sample(self, thetas, gen: np.random.Generator) -> np.ndarray:
        t = as_2d_thetas(thetas, self.dim_theta)
        # p in {0, 1} skips the coin flips so the wrapper is bit-identical to the component
        if self.p == 0.0:
            return self.base.sample(t, gen)
        if self.p == 1.0:
            return self.alt.sample(t, gen)
        use_alt = gen.random(t.shape[0]) < self.p
        out = np.empty((t.shape[0], self.dim_z))
        if (~use_alt).any():
            out[~use_alt] = self.base.sample(t[~use_alt], gen)
        if use_alt.any():
            out[use_alt] = self.alt.sample(t[use_alt], gen)
        return out

    def performative_risk(self, theta, loss: LossFn) -> float:
        a = exact_risk(self.base, theta, loss)
        b = exact_risk(self.alt, theta, loss)
        if a is None or b is None:
            raise NotImplementedError("component without exact risk")
        return (1 - self.p) * a + self.p * b


def contaminate(true_map, p: float, alt) -> ContaminatedMap:
    return ContaminatedMap(true_map, alt, p)


def draw(true_map, theta, m: int, rng: RngLike) -> np.ndarray:
    """``m`` observations at a single deployment ``theta``."""
    t = np.tile(np.asarray(theta, dtype=float).reshape(1, -1), (int(m), 1))
    return true_map.sample(t, as_generator(rng))
