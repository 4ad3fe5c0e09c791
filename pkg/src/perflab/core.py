"""Shared domain types: parameter balls, seeded streams, losses, datasets.

Everything that touches randomness takes either an :class:`RngStream` (a
pure, replayable key) or a ``numpy.random.Generator`` (stateful, used inside
a single operation).  Observations are always 2-d float arrays of shape
``(k, d_z)``; scalar observations use ``d_z = 1``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Protocol, Union, runtime_checkable

import numpy as np

__all__ = [
    "BudgetExceeded",
    "Dataset",
    "LossFn",
    "MapFailure",
    "ParamBall",
    "RngStream",
    "SampleLedger",
    "TrueMap",
    "as_generator",
    "deploy_and_collect",
    "logistic_ridge_loss",
    "mean_and_se",
    "project_ball",
    "sample_uniform_ball",
    "sample_unit_sphere",
    "squared_loss",
    "zero_one_loss",
]

_EPS = np.finfo(float).eps


class MapFailure(RuntimeError):
    """A distribution map could not produce an observation for some deployment."""

    def __init__(self, index: int, theta: np.ndarray, cause: BaseException | str):
        self.index = index
        self.theta = np.asarray(theta)
        self.cause = cause
        super().__init__(f"map failed at deployment {index} (theta={self.theta.tolist()}): {cause}")


class BudgetExceeded(RuntimeError):
    pass


def _key_to_int(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    key = int(key)
    if key < 0:
        raise ValueError(f"stream keys must be nonnegative, got {key}")
    return key


@dataclass(frozen=True)
class RngStream:
    """Replayable random stream identified by ``(seed, stream, path)``.

    ``generator()`` always starts from the same state, so any function that
    receives an ``RngStream`` is a pure function of its inputs.  Children are
    derived through numpy's ``SeedSequence`` spawn keys, which gives
    independent substreams for distinct keys.
    """

    seed: int
    stream: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), *self.path))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys: Union[int, str]) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + tuple(_key_to_int(k) for k in keys))


RngLike = Union[RngStream, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _split(rng: RngLike, *keys: str) -> list[np.random.Generator]:
    """Independent generators for named sub-tasks; a raw Generator is shared."""
    if isinstance(rng, RngStream):
        return [rng.child(k).generator() for k in keys]
    gen = as_generator(rng)
    return [gen for _ in keys]


# ---------------------------------------------------------------------------
# geometry


def project_ball(x, R: float = 1.0, center=None) -> np.ndarray:
    """Euclidean projection onto ``{v : ||v - center|| <= R}`` along the last axis."""
    if R < 0:
        raise ValueError(f"radius must be nonnegative, got {R}")
    x = np.array(x, dtype=float)
    c = 0.0 if center is None else np.asarray(center, dtype=float)
    v = x - c
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    outside = nrm > R
    if not np.any(outside):
        return x
    scale = np.where(outside, R / np.where(outside, nrm, 1.0), 1.0)
    v = v * scale
    # rescaling can overshoot R by an ulp; shrink until membership is exact
    for _ in range(8):
        over = np.linalg.norm(v, axis=-1, keepdims=True) > R
        if not np.any(over):
            break
        v = np.where(over, v * (1.0 - 4 * _EPS), v)
    return v + c


@dataclass(frozen=True)
class ParamBall:
    """Closed Euclidean ball of deployable parameters."""

    dim: int
    radius: float = 1.0
    center: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        if self.center is not None:
            c = tuple(float(v) for v in np.ravel(self.center))
            if len(c) != self.dim:
                raise ValueError("center has wrong dimension")
            object.__setattr__(self, "center", c)

    @property
    def center_array(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.dim)
        return np.array(self.center)

    def contains(self, theta, tol: float = 0.0) -> bool:
        v = np.asarray(theta, dtype=float) - self.center_array
        return bool(np.all(np.linalg.norm(v, axis=-1) <= self.radius + tol))

    def project(self, x) -> np.ndarray:
        return project_ball(x, self.radius, self.center)

    def shrink(self, margin: float) -> "ParamBall":
        if margin >= self.radius:
            raise ValueError(f"margin {margin} leaves an empty ball of radius {self.radius}")
        return ParamBall(self.dim, self.radius - margin, self.center)

    def sample(self, rng: RngLike, size: int) -> np.ndarray:
        return sample_uniform_ball(self, rng, size)


def sample_unit_sphere(d: int, rng: RngLike, size=None) -> np.ndarray:
    gen = as_generator(rng)
    shape = (d,) if size is None else (*np.atleast_1d(size), d)
    g = gen.standard_normal(shape)
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    # a zero normal vector has probability zero; guard anyway
    nrm = np.where(nrm == 0.0, 1.0, nrm)
    return g / nrm


def sample_uniform_ball(ball: ParamBall, rng: RngLike, size=None) -> np.ndarray:
    """Uniform draws on the ball: isotropic direction, radius ``R * U**(1/d)``."""
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    direction = sample_unit_sphere(ball.dim, gen, n)
    radius = ball.radius * gen.random(n) ** (1.0 / ball.dim)
    out = ball.project(direction * radius[:, None] + ball.center_array)
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class LossFn:
    """Loss ``l(z; theta)`` evaluated row-wise on a batch of observations.

    ``value(z, theta)`` maps ``z`` of shape ``(k, d_z)`` and ``theta`` of shape
    ``(d,)`` or ``(k, d)`` to ``(k,)``.  The gradients follow the same
    broadcasting and return ``(k, d)`` / ``(k, d_z)``.
    """

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_theta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    grad_z: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    lipschitz_z: Optional[float] = None
    bound: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __call__(self, z, theta) -> np.ndarray:
        return self.value(np.atleast_2d(np.asarray(z, dtype=float)), np.asarray(theta, dtype=float))


def squared_loss() -> LossFn:
    """``||z - theta||^2``."""

    def value(z, theta):
        r = z - theta
        return np.einsum("...i,...i->...", r, r)

    def grad_theta(z, theta):
        return -2.0 * (z - theta)

    def grad_z(z, theta):
        return 2.0 * (z - theta)

    return LossFn("squared", value, grad_theta, grad_z)


def _sigmoid(s):
    return np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))


def logistic_ridge_loss(lam: float = 1e-3) -> LossFn:
    """Logistic loss on observations ``z = (x, y)`` plus ``(lam / 2) ||theta||^2``."""

    def value(z, theta):
        x, y = z[:, :-1], z[:, -1]
        s = np.einsum("...i,...i->...", x, theta)
        th2 = np.einsum("...i,...i->...", theta, theta)
        return np.logaddexp(0.0, s) - y * s + 0.5 * lam * th2

    def grad_theta(z, theta):
        x, y = z[:, :-1], z[:, -1]
        s = np.einsum("...i,...i->...", x, theta)
        return (_sigmoid(s) - y)[:, None] * x + lam * theta

    def grad_z(z, theta):
        x, y = z[:, :-1], z[:, -1]
        s = np.einsum("...i,...i->...", x, theta)
        gx = (_sigmoid(s) - y)[:, None] * np.broadcast_to(theta, x.shape)
        return np.concatenate([gx, -s[:, None]], axis=1)

    return LossFn("logistic_ridge", value, grad_theta, grad_z, params={"lam": float(lam)})


def zero_one_loss(threshold: float = 0.0, normalize: bool = False) -> LossFn:
    """Misclassification of the rule ``1{theta' x >= T}`` on ``z = (x, y)``.

    With ``normalize`` the rule uses ``theta / ||theta||``, matching maps that
    deploy unit-normalized parameters.
    """

    def value(z, theta):
        x, y = z[:, :-1], z[:, -1]
        if normalize:
            nrm = np.linalg.norm(theta, axis=-1, keepdims=True)
            theta = np.where(nrm > 0, theta / np.where(nrm > 0, nrm, 1.0), np.eye(np.shape(theta)[-1])[0])
        pred = (np.einsum("...i,...i->...", x, theta) >= threshold).astype(float)
        return (pred != y).astype(float)

    return LossFn("zero_one", value, bound=1.0, params={"threshold": float(threshold), "normalize": normalize})


# ---------------------------------------------------------------------------
# maps and data


@runtime_checkable
class TrueMap(Protocol):
    """Black-box distribution map: the only access to ``D(theta)`` is sampling.

    ``sample(thetas, gen)`` takes deployments of shape ``(k, dim_theta)`` and
    returns one independent observation per row, shape ``(k, dim_z)``.
    Optional attributes: ``domain`` (a :class:`ParamBall` restricting valid
    deployments) and ``performative_risk(theta, loss)`` (exact risk).
    """

    dim_theta: int
    dim_z: int

    def sample(self, thetas: np.ndarray, gen: np.random.Generator) -> np.ndarray: ...


class SampleLedger:
    """Counts true-map samples; optionally enforces a hard limit."""

    def __init__(self, limit: Optional[int] = None, name: str = "method"):
        self.limit = limit
        self.name = name
        self.consumed = 0

    def charge(self, k: int) -> None:
        k = int(k)
        if self.limit is not None and self.consumed + k > self.limit:
            raise BudgetExceeded(
                f"{self.name} ledger: charging {k} would exceed limit {self.limit} (consumed {self.consumed})"
            )
        self.consumed += k

    def __repr__(self):
        return f"SampleLedger(name={self.name!r}, consumed={self.consumed}, limit={self.limit})"


@dataclass(frozen=True)
class Dataset:
    """Deployment/observation pairs ``(theta_i, z_i)`` and the seed behind them."""

    thetas: np.ndarray
    zs: np.ndarray
    seed: int = -1

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=float)
        zs = np.array(self.zs, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if zs.ndim == 1:
            zs = zs[:, None]
        if thetas.shape[0] != zs.shape[0]:
            raise ValueError(f"{thetas.shape[0]} deployments but {zs.shape[0]} observations")
        thetas.setflags(write=False)
        zs.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "zs", zs)

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim_theta(self) -> int:
        return self.thetas.shape[1]

    @property
    def dim_z(self) -> int:
        return self.zs.shape[1]

    def __len__(self):
        return self.n

    def pairs(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return zip(self.thetas, self.zs)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.seed == other.seed
            and np.array_equal(self.thetas, other.thetas)
            and np.array_equal(self.zs, other.zs)
        )


Exploration = Union[ParamBall, Callable[[np.random.Generator, int], np.ndarray]]


def _locate_failure(true_map, thetas: np.ndarray, gen: np.random.Generator, err) -> MapFailure:
    for i, th in enumerate(thetas):
        try:
            z = true_map.sample(th[None, :], gen)
            if not np.all(np.isfinite(z)):
                return MapFailure(i, th, "non-finite observation")
        except Exception as exc:  # noqa: BLE001 - re-raised as MapFailure
            return MapFailure(i, th, exc)
    return MapFailure(-1, thetas[0], err)


def deploy_and_collect(
    true_map: TrueMap,
    n: int,
    rng: RngLike,
    exploration: Optional[Exploration] = None,
    ledger: Optional[SampleLedger] = None,
) -> Dataset:
    """Deploy ``n`` exploration draws and observe one sample from each.

    Exploration defaults to the uniform law on the map's ``domain`` when it
    declares one, otherwise on the unit ball of matching dimension.
    """
    if int(n) < 1:
        raise ValueError(f"need n >= 1 deployments, got {n}")
    n = int(n)
    if exploration is None:
        exploration = getattr(true_map, "domain", None) or ParamBall(true_map.dim_theta)
    gen_explore, gen_observe = _split(rng, "explore", "observe")
    if isinstance(exploration, ParamBall):
        thetas = sample_uniform_ball(exploration, gen_explore, n)
    else:
        thetas = np.asarray(exploration(gen_explore, n), dtype=float).reshape(n, -1)
    try:
        zs = np.asarray(true_map.sample(thetas, gen_observe), dtype=float)
    except Exception as exc:  # noqa: BLE001
        raise _locate_failure(true_map, thetas, np.random.default_rng(0), exc) from exc
    bad = ~np.all(np.isfinite(zs.reshape(n, -1)), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise MapFailure(i, thetas[i], "non-finite observation")
    if ledger is not None:
        ledger.charge(n)
    seed = rng.seed if isinstance(rng, RngStream) else -1
    return Dataset(thetas, zs.reshape(n, -1), seed)


def mean_and_se(values) -> tuple[float, float]:
    """Sample mean and its standard error; exactly 0 error for a constant sample."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size < 2:
        raise ValueError("need at least two values")
    se = 0.0 if np.ptp(v) == 0.0 else float(v.std(ddof=1) / np.sqrt(v.size))
    return float(v.mean()), se


def check_loss_gradient(loss: LossFn, z, theta, h: float = 1e-6) -> float:
    """Relative error between ``loss.grad_theta`` and central differences."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    theta = np.asarray(theta, dtype=float)
    g = loss.grad_theta(z, theta).mean(axis=0)
    fd = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        fd[j] = (loss(z, theta + e).mean() - loss(z, theta - e).mean()) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12))


def as_2d_thetas(thetas, dim: int) -> np.ndarray:
    t = np.asarray(thetas, dtype=float)
    if t.ndim == 0:
        t = t.reshape(1, 1)
    elif t.ndim == 1:
        t = t.reshape(-1, dim) if dim == 1 or t.size != dim else t[None, :]
    if t.shape[-1] != dim:
        raise ValueError(f"expected deployments of dimension {dim}, got shape {t.shape}")
    return t


