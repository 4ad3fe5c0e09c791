"""Built-in property checks, runnable without the test suite (``perflab selftest``)."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from . import _backend
from .atlas import CoinAtlas, LocationAtlas, LocationParams, StratClassAtlas, StratRegAtlas, atlas_plug_in_risk_mc
from .atlas import coin_plug_in_argmin, coin_plug_in_risk
from .core import ParamBall, RngStream, deploy_and_collect, logistic_ridge_loss, sample_unit_sphere
from .core import squared_loss
from .mapfit import fit_budget_boundary_mass, fit_coin_ls
from .maps import CoinMap, LocationQuadMap, StratClassMap, StrategicRhoMap, linear_shift, make_logistic_base
from .metrics import performative_risk_mc, sup_gap_on_grid, tv_empirical, wasserstein1_empirical

__all__ = ["CHECKS", "CheckResult", "run_all"]

PHI_STD_NORMAL = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _rel_err(a, b) -> float:
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8))


def central_diff(f: Callable, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def gradient_cases(seed: int = 0):
    """``(name, risk_grad(theta) -> (f, g), ball)`` for every closed-form plug-in risk."""
    gen = np.random.default_rng(seed)
    sq = squared_loss()
    lr = logistic_ridge_loss(1e-3)
    coin = CoinAtlas()
    yield "coin_atlas", lambda th: coin.risk_grad(0.37, th, sq), ParamBall(1, 0.5, (0.5,))
    for d, cols in ((5, None), (4, [0, 2])):
        k = d if cols is None else len(cols)
        loc = LocationAtlas(d, columns=cols)
        beta = LocationParams(gen.standard_normal((d, k)) / 2, gen.standard_normal(d))
        yield f"location_atlas_d{d}", (lambda th, a=loc, b=beta: a.risk_grad(b, th, sq)), ParamBall(d)
    X0, y, _ = make_logistic_base(400, 5, seed + 1)
    sr = StratRegAtlas(X0, y)
    yield "strat_reg_atlas", lambda th: sr.risk_grad(1.7, th, lr), ParamBall(5)
    sr_generic = StratRegAtlas(X0, y)
    yield "strat_reg_atlas_generic", lambda th: sr_generic._risk_grad_generic(1.7, th, lr), ParamBall(5)


def check_gradients(points: int = 100, tol: float = 1e-5, seed: int = 0) -> CheckResult:
    worst = 0.0
    where = ""
    for name, fg, ball in gradient_cases(seed):
        gen = np.random.default_rng(seed + 11)
        for th in np.atleast_2d(ball.sample(gen, points)):
            g = fg(th)[1]
            num = central_diff(lambda t: fg(t)[0], th)
            err = _rel_err(num, g)
            if err > worst:
                worst, where = err, name
    return CheckResult("gradients", worst <= tol, f"max relative error {worst:.2e} ({where}) over {points} points")


def mc_cases():
    """``(name, exact risk, sampler(theta, m, rng) -> (mean, se), ball)`` pairs."""
    sq = squared_loss()
    coin = CoinMap(0.3, 0.15)
    yield "coin_map", lambda th: coin.performative_risk(th, sq), \
        lambda th, m, r: performative_risk_mc(coin, th, sq, m, r), coin.domain
    atlas = CoinAtlas()
    yield "coin_atlas", lambda th: coin_plug_in_risk(0.3, float(th[0])), \
        lambda th, m, r: atlas_plug_in_risk_mc(atlas, 0.3, th, sq, m, r), coin.domain
    loc = LocationQuadMap.generate(3, 0.5, 0.5, 2)
    yield "location_map", lambda th: loc.performative_risk(th, sq), \
        lambda th, m, r: performative_risk_mc(loc, th, sq, m, r), ParamBall(3)
    la = LocationAtlas(3, noise_scale=0.5)
    beta = LocationParams(loc.M1, loc.b)
    yield "location_atlas", lambda th: la.risk(beta, th, sq) + la.risk_offset(beta), \
        lambda th, m, r: atlas_plug_in_risk_mc(la, beta, th, sq, m, r), ParamBall(3)
    X0, y, _ = make_logistic_base(2000, 5, 3)
    lr = logistic_ridge_loss(1e-3)
    srm = StrategicRhoMap(X0, y, 2.0, 2.5)
    yield "strat_reg_map", lambda th: srm.performative_risk(th, lr), \
        lambda th, m, r: performative_risk_mc(srm, th, lr, m, r), ParamBall(5)
    sra = StratRegAtlas(X0, y)
    yield "strat_reg_atlas", lambda th: sra.risk(1.3, th, lr), \
        lambda th, m, r: atlas_plug_in_risk_mc(sra, 1.3, th, lr, m, r), ParamBall(5)


def check_mc_agreement(points: int = 20, m: int = 20_000, seed: int = 0, z: float = 3.0) -> CheckResult:
    total = bad = 0
    worst = 0.0
    for name, exact, mc, ball in mc_cases():
        gen = np.random.default_rng(seed)
        for i, th in enumerate(np.atleast_2d(ball.sample(gen, points))):
            est, se = mc(th, m, RngStream(seed, path=(i,)))
            r = abs(est - exact(th)) / max(se, 1e-300)
            worst = max(worst, r)
            total += 1
            bad += r > z
    return CheckResult("mc_vs_closed_form", bad == 0, f"{bad}/{total} pairs beyond {z} SE (max {worst:.2f} SE)")


def check_kernel_parity(seed: int = 0) -> CheckResult:
    if "compiled" not in _backend.available():
        return CheckResult("kernel_parity", True, "compiled kernels not built; python backend only")
    py, cc = _backend.kernels("python"), _backend.kernels("compiled")
    gen = np.random.default_rng(seed)
    d, T, m = 4, 50, 3
    lm = LocationQuadMap.generate(d, 0.7, 0.5, seed)
    args = (np.full(d, 0.5), lm.b, lm.M1, lm.M2, lm.s, 0.3)
    ctr = np.zeros(d)
    U = sample_unit_sphere(d, gen, (T, m))
    Z = gen.standard_normal((T, m, d))
    a, _ = py.location_dfo_loop(*args, 0.4, ctr, 1.0, U, Z)
    b, _ = cc.location_dfo_loop(*args, 0.4, ctr, 1.0, U, Z)
    e1 = float(np.abs(np.asarray(a) - np.asarray(b)).max())
    a, _ = py.location_sgd_loop(*args, ctr, 1.0, Z)
    b, _ = cc.location_sgd_loop(*args, ctr, 1.0, Z)
    e2 = float(np.abs(np.asarray(a) - np.asarray(b)).max())
    X0, y, _ = make_logistic_base(300, d, seed)
    th = gen.standard_normal(d) / 3
    mask = np.ones(d)
    fa, ga = py.strat_reg_risk_grad(X0, y, th, 1.2, mask, 1e-3)
    fb, gb = cc.strat_reg_risk_grad(X0, y, th, 1.2, mask, 1e-3)
    e3 = max(abs(fa - fb), float(np.abs(np.asarray(ga) - np.asarray(gb)).max()))
    worst = max(e1, e2, e3)
    return CheckResult("kernel_parity", worst <= 1e-9, f"max deviation {worst:.1e} (dfo, sgd, strat_reg)")


def check_wasserstein_metric(trials: int = 200, seed: int = 0) -> CheckResult:
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        k = int(gen.integers(1, 40))
        a, b, c = (gen.standard_normal(k) * gen.uniform(0.1, 3) + gen.normal() for _ in range(3))
        ab, ba = wasserstein1_empirical(a, b), wasserstein1_empirical(b, a)
        ac, bc = wasserstein1_empirical(a, c), wasserstein1_empirical(b, c)
        worst = max(worst, abs(ab - ba), ac - (ab + bc))
    ok = worst <= 1e-12 and wasserstein1_empirical([0, 1], [0, 2]) == 0.5
    return CheckResult("wasserstein_metric", ok, f"symmetry/triangle violation {worst:.1e} over {trials} triples")


def coupled_strat_reg_w1(trials: int = 100, seed: int = 0) -> float:
    """Largest deviation of the coupled feature W1 (along theta) from ``|beta - beta'| ||theta||``."""
    gen = np.random.default_rng(seed)
    X0 = gen.standard_normal((2000, 5))
    worst = 0.0
    for _ in range(trials):
        th = ParamBall(5).sample(gen, 1)[0]
        b1, b2 = gen.uniform(0, 4, 2)
        x1 = linear_shift(X0, th[None, :], b1)
        x2 = linear_shift(X0, th[None, :], b2)
        u = th / max(np.linalg.norm(th), 1e-300)
        w = wasserstein1_empirical(x1, x2, direction=u)
        worst = max(worst, abs(w - abs(b1 - b2) * np.linalg.norm(th)))
    return worst


def coupled_location_gap(trials: int = 100, seed: int = 0) -> float:
    """Largest ``| sup_i ||z_i - z'_i|| - ||(M - M')theta|| |`` and slack against ``||theta|| opnorm(M-M')``."""
    gen = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        d = int(gen.integers(1, 8))
        M, M2 = gen.standard_normal((2, d, d))
        th = ParamBall(d).sample(gen, 1)[0]
        z0 = gen.standard_normal((50, d))
        shift = np.linalg.norm((z0 + M @ th) - (z0 + M2 @ th), axis=1)
        bound = np.linalg.norm(th) * np.linalg.norm(M - M2, 2)
        worst = max(worst, float(shift.max() - bound))
    return worst


def coupled_strat_class_tv(trials: int = 100, n: int = 100_000, seed: int = 0) -> tuple[int, float]:
    """Count of coupled histogram-TV draws exceeding ``phi_u |beta - beta'|`` plus the binning allowance."""
    gen = np.random.default_rng(seed)
    X0 = gen.standard_normal((n, 2))
    atlas = StratClassAtlas(X0, np.zeros(n), T=0.0, beta_max=2.0)
    fails = 0
    worst = -np.inf
    for _ in range(trials):
        th = sample_unit_sphere(2, gen)
        b1, b2 = gen.uniform(0, 2, 2)
        p1 = atlas.population(b1, th)[:, :2] @ th
        p2 = atlas.population(b2, th)[:, :2] @ th
        tv = tv_empirical(p1, p2)
        rate = PHI_STD_NORMAL * abs(b1 - b2)
        allowance = 3.0 * np.sqrt(rate / n) + 1.0 / n
        worst = max(worst, tv - rate - allowance)
        fails += tv > rate + allowance
    return fails, worst


def check_smoothness(seed: int = 0) -> CheckResult:
    w = coupled_strat_reg_w1(seed=seed)
    loc = coupled_location_gap(seed=seed)
    fails, _ = coupled_strat_class_tv(seed=seed)
    ok = w <= 1e-9 and loc <= 1e-12 and fails == 0
    return CheckResult("coupled_smoothness", ok,
                       f"strat_reg W1 deviation {w:.1e}; location slack {loc:.1e}; strat_class TV {fails}/100 over")


def budget_bound_trials(reps: int = 200, n: int = 10_000, beta_true: float = 0.2, T: float = 0.5,
                        eps: float = 0.01, seed: int = 0) -> tuple[float, float, float]:
    """Share of reps with ``|beta_hat - beta*| <= sqrt(log(40) / (2n)) / phi_l`` under a uniform base.

    Base projections are uniform on ``[0, 1]`` (``phi_l = 1``).  ``beta*`` is the
    large-sample limit of the estimator, ``beta_true + eps``: the window of
    half-width ``eps`` also catches unmoved points just above ``T``.
    """
    bound = np.sqrt(np.log(2 / 0.05) / (2 * n))
    beta_star = beta_true + eps

    def band_prob(b):
        return min(max(b, 0.0), T)

    gen = np.random.default_rng(seed)
    hits = 0
    for r in range(reps):
        X0 = gen.random((n, 1))
        m = StratClassMap(X0, np.zeros(n), beta_true, T)
        data = deploy_and_collect(m, n, RngStream(seed, path=(r,)), exploration=_unit_theta)
        fit = fit_budget_boundary_mass(data, band_prob, T, eps, beta_max=T, n_features=1)
        hits += abs(fit.beta - beta_star) <= bound
    return hits / reps, bound, beta_star


def _unit_theta(gen, size):
    return np.ones((int(size), 1))


def check_budget_bound(seed: int = 0) -> CheckResult:
    share, bound, beta_star = budget_bound_trials(seed=seed)
    return CheckResult("budget_estimator_bound", share >= 0.95,
                       f"{share:.1%} of 200 reps within {bound:.4f} of beta*={beta_star}")


def coin_decomposition_trials(configs: int = 100, seed: int = 0) -> list[dict]:
    """Realized excess risk and the sup-gap bound on random coin instances (exact risks)."""
    gen = np.random.default_rng(seed)
    sq = squared_loss()
    ball = ParamBall(1, 0.5, (0.5,))
    out = []
    for i in range(configs):
        mu = gen.uniform(0.05, 0.45)
        eta = gen.uniform(0, 0.5 - mu) if gen.random() < 0.8 else 0.0
        n = int(10 ** gen.uniform(2, 5))
        cm = CoinMap(mu, eta)
        data = deploy_and_collect(cm, n, RngStream(seed, path=(i,)))
        b_hat = fit_coin_ls(data).beta
        b_star = min(mu + 0.75 * eta, 0.5 - 1e-6)
        th_hat = coin_plug_in_argmin(b_hat)

        def pr(t):
            return cm.performative_risk(np.atleast_1d(t), sq)

        grid = np.linspace(0, 1, 2001)
        vals = np.array([pr(t) for t in grid])
        k = int(np.argmin(vals))
        res = minimize_scalar(pr, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, 2000)]), method="bounded",
                              options={"xatol": 1e-12})
        pr_opt = min(vals[k], res.fun)
        excess = pr(th_hat) - pr_opt
        mis = sup_gap_on_grid(lambda t: coin_plug_in_risk(b_star, t[0]), pr, ball).value
        stat = sup_gap_on_grid(lambda t: coin_plug_in_risk(b_star, t[0]),
                               lambda t: coin_plug_in_risk(b_hat, t[0]), ball).value
        out.append({"mu": mu, "eta": eta, "n": n, "excess": excess, "misspec": mis, "stat": stat,
                    "bound": 2 * (mis + stat) + 1e-3})
    return out


def check_decomposition(seed: int = 0) -> CheckResult:
    rows = coin_decomposition_trials(seed=seed)
    ok = sum(r["excess"] <= r["bound"] for r in rows)
    return CheckResult("excess_risk_decomposition", ok == len(rows), f"{ok}/{len(rows)} instances within bound")


def check_coin_closed_forms() -> CheckResult:
    sq = squared_loss()
    cm = CoinMap(0.3, 0.0)
    gap = cm.performative_risk(np.array([5 / 7]), sq) - cm.performative_risk(np.array([0.875]), sq)
    ok = abs(coin_plug_in_argmin(0.3) - 0.875) < 1e-12 and abs(gap - 0.4 * (0.875 - 5 / 7) ** 2) < 1e-12
    return CheckResult("coin_closed_forms", ok, f"stable-vs-optimal gap {gap:.6f}")


CHECKS = [check_coin_closed_forms, check_gradients, check_mc_agreement, check_kernel_parity,
          check_wasserstein_metric, check_smoothness, check_budget_bound, check_decomposition]


def run_all(verbose: bool = False) -> bool:
    ok = True
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as err:
            res = CheckResult(fn.__name__[len("check_"):], False, f"raised {type(err).__name__}: {err}")
        res.seconds = time.perf_counter() - t0
        ok &= res.passed
        if verbose:
            print(res.line(), flush=True)
    return ok
