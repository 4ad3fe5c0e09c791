"""Constraint sets and a projected gradient method with backtracking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class NonFiniteError(FloatingPointError):
    """Objective or gradient went non-finite; carries the iterate history."""

    def __init__(self, message: str, iterates: list):
        self.iterates = iterates
        tail = [np.asarray(x).tolist() for x in iterates[-5:]]
        super().__init__(f"{message}; last iterates: {tail}")


@dataclass(frozen=True)
class Box:
    """Per-coordinate interval constraints ``lower <= beta <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError(f"empty box: lower {lo} > upper {hi}")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Box":
        return cls(np.array([lo]), np.array([hi]))

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, beta) -> np.ndarray:
        return np.clip(np.asarray(beta, dtype=float), self.lower, self.upper)

    def contains(self, beta, tol: float = 0.0) -> bool:
        b = np.asarray(beta, dtype=float)
        return bool(np.all(b >= self.lower - tol) and np.all(b <= self.upper + tol))

    def center(self) -> np.ndarray:
        lo, hi = self.lower, self.upper
        c = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
        c = np.where(np.isfinite(lo) & ~np.isfinite(hi), lo, c)
        c = np.where(~np.isfinite(lo) & np.isfinite(hi), hi, c)
        return c

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Simplex:
    """Probability simplex in ``R^k``."""

    dim: int

    def project(self, beta) -> np.ndarray:
        v = np.asarray(beta, dtype=float)
        u = np.sort(v)[::-1]
        css = np.cumsum(u) - 1.0
        idx = np.arange(1, v.size + 1)
        rho = np.nonzero(u - css / idx > 0)[0][-1]
        tau = css[rho] / (rho + 1.0)
        return np.maximum(v - tau, 0.0)

    def contains(self, beta, tol: float = 1e-9) -> bool:
        b = np.asarray(beta, dtype=float)
        return bool(np.all(b >= -tol) and abs(b.sum() - 1.0) <= tol)

    def center(self) -> np.ndarray:
        return np.full(self.dim, 1.0 / self.dim)

    def to_dict(self) -> dict:
        return {"simplex": self.dim}


@dataclass
class SolveResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    pg_norm: float
    f0: float
    history: list = field(default_factory=list, repr=False)


def projected_gradient_descent(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    project: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-8,
    max_iters: int = 10_000,
    armijo: float = 1e-4,
    step0: float = 1.0,
    keep_history: bool = False,
) -> SolveResult:
    """Minimize ``fun`` over a convex set given by its Euclidean projection.

    Step sizes come from backtracking (halving) on the projection arc with the
    sufficient-decrease test ``f(x+) <= f(x) + armijo * g.(x+ - x)``.  The
    returned point is the best iterate seen, so ``fun`` there never exceeds
    its value at the (projected) start.  Stops when the projected-gradient
    norm ``||x - P(x - g)||`` falls below ``tol`` or after ``max_iters``.
    """
    x = project(np.array(x0, dtype=float))
    f, g = fun(x)
    iterates = [x.copy()]
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteError("non-finite objective at the initial point", iterates)
    f0 = f
    best_x, best_f = x.copy(), f
    t = step0
    pg = float(np.linalg.norm(x - project(x - g)))
    it = 0
    converged = pg <= tol
    while not converged and it < max_iters:
        it += 1
        t = min(2.0 * t, 1e8)
        while True:
            x_new = project(x - t * g)
            step = x_new - x
            f_new, g_new = fun(x_new)
            if not np.isfinite(f_new):
                if t < 1e-30:
                    raise NonFiniteError("non-finite objective along the search direction", iterates)
                t *= 0.5
                continue
            if f_new <= f + armijo * float(np.dot(g.ravel(), step.ravel())) or t < 1e-30:
                break
            t *= 0.5
        if not np.all(np.isfinite(g_new)):
            iterates.append(x_new.copy())
            raise NonFiniteError("non-finite gradient", iterates)
        moved = float(np.linalg.norm(step))
        x, f, g = x_new, f_new, g_new
        if keep_history or len(iterates) < 64:
            iterates.append(x.copy())
        else:
            iterates[-1] = x.copy()
        if f < best_f:
            best_x, best_f = x.copy(), f
        pg = float(np.linalg.norm(x - project(x - g)))
        converged = pg <= tol
        if moved == 0.0:
            break
    return SolveResult(best_x, float(best_f), it, converged, pg, float(f0), iterates if keep_history else [])
