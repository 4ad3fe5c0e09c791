"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run ``python tests/test_acceptance.py`` to print only the criterion lines.
"""

import time

import numpy as np

from perflab import selftest
from perflab.core import RngStream, SampleLedger
from perflab.harness import PluginPipeline, RunPlanConfig, ScenarioConfig, build_scenario, run_experiment

REPORT: list = []
DEFAULT_BUDGETS = (500, 1000, 2000, 4000, 8000, 16000, 32000)


def _report(number: int, title: str, ok: bool, detail: str, seconds: float) -> None:
    REPORT.append(f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail} [{seconds:.1f}s]")


def _by(records, method, n):
    return {r.rep: r for r in records if r.method == method and r.n == n}


def test_01_coin_end_to_end():
    t0 = time.perf_counter()
    sc = build_scenario(ScenarioConfig.build("coin_quadratic", "coin", mu=0.3, eta=0.2))
    n = 100_000
    betas, thetas = [], []
    for rep in range(10):
        theta, fit = PluginPipeline(sc).run(n, RngStream(rep), SampleLedger(n))
        betas.append(float(fit.beta))
        thetas.append(float(theta[0]))
    betas, thetas = np.array(betas), np.array(thetas)
    beta_err = abs(betas.mean() - 0.45)
    formula = (1 - betas) / (2 - 4 * betas)
    theta_err = float(np.max(np.abs(thetas - formula)))
    clipped_err = float(np.max(np.abs(thetas - np.clip(formula, 0.0, 1.0))))
    elapsed = time.perf_counter() - t0
    ok = beta_err <= 0.02 and theta_err <= 1e-6 and elapsed < 10
    _report(1, "coin end-to-end", ok,
            f"|mean beta_hat - 0.45| = {beta_err:.4f}; max |theta_hat - (1-b)/(2-4b)| = {theta_err:.3g} "
            f"(formula ~{formula.mean():.3f} lies outside [0, 1]; vs clipped formula {clipped_err:.1e})",
            elapsed)
    assert beta_err <= 0.02
    assert elapsed < 10
    assert theta_err <= 1e-6


def test_02_decomposition_bound():
    t0 = time.perf_counter()
    rows = selftest.coin_decomposition_trials(configs=100, seed=0)
    inside = sum(r["excess"] <= r["bound"] for r in rows)
    elapsed = time.perf_counter() - t0
    ok = inside == 100 and elapsed < 60
    _report(2, "excess <= 2(misspec + stat) + 1e-3", ok, f"{inside}/100 configurations within bound", elapsed)
    assert ok


def test_03_estimation_rate():
    t0 = time.perf_counter()
    cfg = ScenarioConfig.build("loc_s0", "location", d=5, s=0.0)
    plan = RunPlanConfig(methods=("plugin",), budgets=DEFAULT_BUDGETS, repetitions=20, seed=0)
    recs = run_experiment(cfg, plan, jobs=1)
    err = [np.mean([r.beta_err for r in _by(recs, "plugin", n).values()]) for n in DEFAULT_BUDGETS]
    slope = float(np.polyfit(np.log(DEFAULT_BUDGETS), np.log(err), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = -0.65 <= slope <= -0.35 and elapsed < 120
    _report(3, "estimation rate", ok, f"log-log slope of ||M_hat - M_proxy||_op = {slope:.3f}", elapsed)
    assert ok


def test_04_misspecification_plateau():
    t0 = time.perf_counter()
    plan = RunPlanConfig(methods=("plugin",), budgets=(10_000, 100_000), repetitions=10, seed=0)
    mis = run_experiment(ScenarioConfig.build("loc_s05", "location", d=5, s=0.5), plan, jobs=1)
    well = run_experiment(ScenarioConfig.build("loc_s0", "location", d=5, s=0.0), plan, jobs=1)

    def stats(recs, n):
        v = np.array([r.excess_risk for r in _by(recs, "plugin", n).values()])
        return v.mean(), v.std(ddof=1) / np.sqrt(len(v))

    m4, se4 = stats(mis, 10_000)
    m5, se5 = stats(mis, 100_000)
    w5, sew = stats(well, 100_000)
    rel = abs(m4 - m5) / ((m4 + m5) / 2)
    z4 = (m4 - w5) / np.hypot(se4, sew)
    z5 = (m5 - w5) / np.hypot(se5, sew)
    elapsed = time.perf_counter() - t0
    ok = rel < 0.25 and z4 >= 3 and z5 >= 3
    _report(4, "misspecification plateau", ok,
            f"s=0.5 excess {m4:.4g} (1e4) vs {m5:.4g} (1e5), rel diff {rel:.1%}; "
            f"above s=0 ({w5:.2g}) by {z4:.1f} and {z5:.1f} SE", elapsed)
    assert ok


def test_05_baseline_ordering():
    t0 = time.perf_counter()
    n = DEFAULT_BUDGETS[-1]
    plan = RunPlanConfig(methods=("plugin", "dfo", "sgd"), budgets=(n,), repetitions=10, seed=0)
    parts, ok = [], True
    for cfg in (ScenarioConfig.build("location_s0", "location", d=5, s=0.0),
                ScenarioConfig.build("strat_reg_rho2", "strat_reg", rho=2.0)):
        recs = run_experiment(cfg, plan, jobs=1)
        plug = _by(recs, "plugin", n)
        for base in ("dfo", "sgd"):
            other = _by(recs, base, n)
            wins = sum(plug[k].excess_risk < other[k].excess_risk for k in plug)
            ok &= wins >= 9
            parts.append(f"{cfg.name} plugin<{base} {wins}/10")
    coin = run_experiment(ScenarioConfig.build("coin", "coin", mu=0.3, eta=0.0),
                          RunPlanConfig(methods=("plugin", "sgd"), budgets=(n,), repetitions=10, seed=0), jobs=1)
    sgd = list(_by(coin, "sgd", n).values())
    sgd_theta = np.mean([float(r.diagnostics.split("theta_norm=")[1].split(";")[0]) for r in sgd])
    sgd_excess = np.mean([r.excess_risk for r in sgd])
    plug_excess = np.mean([r.excess_risk for r in _by(coin, "plugin", n).values()])
    ok &= abs(sgd_theta - 5 / 7) <= 0.02 and abs(sgd_excess - 0.010332) <= 0.003 and plug_excess <= 0.002
    parts.append(f"coin sgd theta {sgd_theta:.4f} excess {sgd_excess:.4f}, plugin excess {plug_excess:.2g}")
    elapsed = time.perf_counter() - t0
    _report(5, "baseline ordering", ok, "; ".join(parts), elapsed)
    assert ok


def test_06_smoothness_invariants():
    t0 = time.perf_counter()
    w = selftest.coupled_strat_reg_w1(trials=100, seed=0)
    loc = selftest.coupled_location_gap(trials=100, seed=0)
    fails, _ = selftest.coupled_strat_class_tv(trials=100, seed=0)
    elapsed = time.perf_counter() - t0
    ok = w <= 1e-9 and loc <= 1e-12 and fails == 0
    _report(6, "smoothness invariants", ok,
            f"strat_reg W1 deviation {w:.1e}; location slack {loc:.1e}; strat_class TV over bound {fails}/100",
            elapsed)
    assert ok


def test_07_budget_estimator_bound():
    t0 = time.perf_counter()
    share, bound, beta_star = selftest.budget_bound_trials(reps=200, n=10_000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = share >= 0.95
    _report(7, "budget estimator bound", ok, f"{share:.1%} of 200 reps within {bound:.4f} of {beta_star:.4g}", elapsed)
    assert ok


def test_08_numerical_hygiene():
    t0 = time.perf_counter()
    grad = selftest.check_gradients(points=100, tol=1e-5)
    mc = selftest.check_mc_agreement(points=20, m=20_000, seed=0, z=3.0)
    t1 = time.perf_counter()
    suite = selftest.run_all(verbose=False)
    suite_time = time.perf_counter() - t1
    ok = grad.passed and mc.passed and suite and suite_time < 600
    _report(8, "numerical hygiene", ok,
            f"{grad.detail}; {mc.detail}; selftest {'passed' if suite else 'failed'} in {suite_time:.1f}s",
            time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(REPORT))
