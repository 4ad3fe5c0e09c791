# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs, log1p, isfinite

cnp.import_array()

cdef double _EPS = np.finfo(float).eps


cdef inline void _project(double[::1] theta, const double[::1] center, double radius, double[::1] work) noexcept nogil:
    cdef Py_ssize_t i, d = theta.shape[0]
    cdef double nrm = 0.0, sc
    for i in range(d):
        work[i] = theta[i] - center[i]
        nrm += work[i] * work[i]
    nrm = sqrt(nrm)
    if nrm <= radius:
        return
    sc = radius / nrm
    for i in range(d):
        work[i] *= sc
    while True:
        nrm = 0.0
        for i in range(d):
            nrm += work[i] * work[i]
        if sqrt(nrm) <= radius:
            break
        for i in range(d):
            work[i] *= (1.0 - 4 * _EPS)
    for i in range(d):
        theta[i] = center[i] + work[i]


def strat_reg_risk_grad(const double[:, ::1] X0, const double[::1] y, const double[::1] theta,
                        double beta, const double[::1] mask, double lam):
    cdef Py_ssize_t n = X0.shape[0], d = X0.shape[1], i, j
    cdef double th_tm = 0.0, th2 = 0.0, s, e, sig, w, wsum = 0.0, value = 0.0
    grad_arr = np.zeros(d)
    cdef double[::1] grad = grad_arr
    for j in range(d):
        th_tm += theta[j] * theta[j] * mask[j]
        th2 += theta[j] * theta[j]
    with nogil:
        for i in range(n):
            s = beta * th_tm
            for j in range(d):
                s += X0[i, j] * theta[j]
            e = exp(-fabs(s))
            if s >= 0:
                value += s + log1p(e) - y[i] * s
                sig = 1.0 / (1.0 + e)
            else:
                value += log1p(e) - y[i] * s
                sig = e / (1.0 + e)
            w = sig - y[i]
            wsum += w
            for j in range(d):
                grad[j] += w * X0[i, j]
        for j in range(d):
            grad[j] = grad[j] / n + 2.0 * beta * theta[j] * mask[j] * (wsum / n) + lam * theta[j]
    return value / n + 0.5 * lam * th2, grad_arr


def location_dfo_loop(const double[::1] theta0, const double[::1] b, const double[:, ::1] M1,
                      const double[:, ::1] M2, double s, double c0, double delta,
                      const double[::1] center, double radius,
                      const double[:, :, ::1] U, const double[:, :, ::1] Z):
    cdef Py_ssize_t T = U.shape[0], m = U.shape[1], d = U.shape[2]
    cdef Py_ssize_t t, j, i, k
    cdef double scale = d / (delta * m), loss, zi, step
    cdef int bad = -1
    out = np.empty((T + 1, d))
    cdef double[:, ::1] thetas = out
    theta_arr = np.array(theta0, dtype=float)
    cdef double[::1] theta = theta_arr
    cdef double[::1] q = np.empty(d), g = np.empty(d), work = np.empty(d)
    for i in range(d):
        thetas[0, i] = theta[i]
    with nogil:
        for t in range(T):
            for i in range(d):
                g[i] = 0.0
            for j in range(m):
                for i in range(d):
                    q[i] = theta[i] + delta * U[t, j, i]
                loss = 0.0
                for i in range(d):
                    zi = b[i] + Z[t, j, i]
                    for k in range(d):
                        zi += M1[i, k] * q[k] + s * M2[i, k] * q[k] * q[k]
                    zi -= q[i]
                    loss += zi * zi
                for i in range(d):
                    g[i] += loss * U[t, j, i]
            step = c0 / (t + 1.0)
            for i in range(d):
                g[i] *= scale
                if not isfinite(g[i]):
                    bad = t
            if bad >= 0:
                break
            for i in range(d):
                theta[i] -= step * g[i]
            _project(theta, center, radius, work)
            for i in range(d):
                thetas[t + 1, i] = theta[i]
    if bad >= 0:
        return out[: bad + 1], bad
    return out, -1


def location_sgd_loop(const double[::1] theta0, const double[::1] b, const double[:, ::1] M1,
                      const double[:, ::1] M2, double s, double c0,
                      const double[::1] center, double radius, const double[:, :, ::1] Z):
    cdef Py_ssize_t T = Z.shape[0], m = Z.shape[1], d = Z.shape[2]
    cdef Py_ssize_t t, j, i, k
    cdef double step, mu, zbar
    cdef int bad = -1
    out = np.empty((T + 1, d))
    cdef double[:, ::1] thetas = out
    theta_arr = np.array(theta0, dtype=float)
    cdef double[::1] theta = theta_arr
    cdef double[::1] g = np.empty(d), work = np.empty(d)
    for i in range(d):
        thetas[0, i] = theta[i]
    with nogil:
        for t in range(T):
            for i in range(d):
                mu = b[i]
                for k in range(d):
                    mu += M1[i, k] * theta[k]
                for k in range(d):
                    mu += s * M2[i, k] * theta[k] * theta[k]
                zbar = 0.0
                for j in range(m):
                    zbar += Z[t, j, i]
                zbar = mu + zbar / m
                g[i] = -2.0 * (zbar - theta[i])
                if not isfinite(g[i]):
                    bad = t
            if bad >= 0:
                break
            step = c0 / (t + 1.0)
            for i in range(d):
                theta[i] -= step * g[i]
            _project(theta, center, radius, work)
            for i in range(d):
                thetas[t + 1, i] = theta[i]
    if bad >= 0:
        return out[: bad + 1], bad
    return out, -1
