"""Pure-numpy implementations of the hot kernels.

Signatures mirror ``_kernels.pyx`` exactly; ``_backend`` picks one at import.
Randomness is always passed in pre-drawn so both backends consume identical
streams.
"""

from __future__ import annotations

import numpy as np

_EPS = np.finfo(float).eps


def _project(theta, center, radius):
    v = theta - center
    nrm = np.sqrt(v @ v)
    if nrm > radius:
        v = v * (radius / nrm)
        while np.sqrt(v @ v) > radius:
            v = v * (1.0 - 4 * _EPS)
        return center + v
    return theta


def strat_reg_risk_grad(X0, y, theta, beta, mask, lam):
    """Logistic-ridge plug-in risk of ``x = x0 + beta * (theta o mask)`` over the base set."""
    tm = theta * mask
    s = X0 @ theta + beta * (theta @ tm)
    value = np.mean(np.logaddexp(0.0, s) - y * s) + 0.5 * lam * (theta @ theta)
    e = np.exp(-np.abs(s))
    sig = np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    w = sig - y
    grad = (w @ X0) / X0.shape[0] + 2.0 * beta * tm * w.mean() + lam * theta
    return float(value), grad


def location_dfo_loop(theta0, b, M1, M2, s, c0, delta, center, radius, U, Z):
    T, m, d = U.shape
    thetas = np.empty((T + 1, d))
    theta = np.array(theta0, dtype=float)
    thetas[0] = theta
    scale = d / (delta * m)
    for t in range(T):
        q = theta + delta * U[t]
        z = b + q @ M1.T + s * (q * q) @ M2.T + Z[t]
        r = z - q
        loss = np.einsum("ij,ij->i", r, r)
        g = (loss @ U[t]) * scale
        if not np.all(np.isfinite(g)):
            return thetas[: t + 1], t
        theta = _project(theta - (c0 / (t + 1.0)) * g, center, radius)
        thetas[t + 1] = theta
    return thetas, -1


def location_sgd_loop(theta0, b, M1, M2, s, c0, center, radius, Z):
    T, m, d = Z.shape
    thetas = np.empty((T + 1, d))
    theta = np.array(theta0, dtype=float)
    thetas[0] = theta
    for t in range(T):
        mu = b + M1 @ theta + s * (M2 @ (theta * theta))
        zbar = mu + Z[t].mean(axis=0)
        g = -2.0 * (zbar - theta)
        if not np.all(np.isfinite(g)):
            return thetas[: t + 1], t
        theta = _project(theta - (c0 / (t + 1.0)) * g, center, radius)
        thetas[t + 1] = theta
    return thetas, -1
