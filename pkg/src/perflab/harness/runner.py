"""Sweep execution: one record per (method, n, rep) cell."""

from __future__ import annotations

import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import multiprocessing as mp
import numpy as np

from ..baselines import default_grid, run_with_budget, tune_baseline
from ..core import RngStream, SampleLedger
from ..mapfit import FitResult
from ..metrics import excess_risk, performative_risk
from ..optimize import OracleCache, OracleResult
from .config import ConfigError, RunPlanConfig, ScenarioConfig
from .scenarios import Scenario, build_scenario

__all__ = ["ExperimentRecord", "PluginPipeline", "cell_seed", "default_jobs", "run_experiment"]


@dataclass
class ExperimentRecord:
    experiment: str
    scenario_hash: str
    method: str
    n: int
    rep: int
    seed: int
    excess_risk: float
    accuracy: Optional[float] = None
    beta_err: Optional[float] = None
    elapsed_ms: int = 0
    diagnostics: str = ""


def cell_seed(master: int, method: str, n: int, rep: int) -> int:
    """Deterministic 63-bit seed for one sweep cell."""
    ss = np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(method.encode()), int(n), int(rep)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def default_jobs() -> int:
    try:
        return max(int(os.environ.get("PERFLAB_JOBS", "1")), 1)
    except ValueError:
        return 1


def _fmt_diag(d: dict) -> str:
    parts = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, float):
            v = format(v, ".6g")
        parts.append(f"{k}={v}")
    return ";".join(parts)


class PluginPipeline:
    """Deploy, fit, optimize: each step is a method so tests can stub it."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario

    def deploy(self, n: int, rng: RngStream, ledger: SampleLedger):
        return self.scenario.deploy(n, rng, ledger)

    def fit(self, data) -> FitResult:
        return self.scenario.fitter(data)

    def optimize(self, fit: FitResult, rng: RngStream) -> np.ndarray:
        return self.scenario.solver(fit, rng)

    def run(self, n: int, rng: RngStream, ledger: SampleLedger) -> tuple[np.ndarray, FitResult]:
        data = self.deploy(n, rng.child("deploy"), ledger)
        fit = self.fit(data)
        theta = self.optimize(fit, rng.child("optimize"))
        return np.asarray(theta, dtype=float), fit


@dataclass
class _Context:
    scenario: Scenario
    plan: RunPlanConfig
    oracle: OracleResult
    proxy: Optional[FitResult]
    tuned: dict
    pipeline_factory: type


_CTX: Optional[_Context] = None


def _score(sc: Scenario, theta, oracle, rng: RngStream) -> float:
    return excess_risk(sc.baseline_map, sc.loss, theta, oracle, rng=rng.child("eval").generator())


def _run_cell(ctx: _Context, method: str, n: int, rep: int) -> ExperimentRecord:
    sc = ctx.scenario
    seed = cell_seed(ctx.plan.seed, method, n, rep)
    stream = RngStream(seed)
    ledger = SampleLedger(n, method)
    diag: dict = {}
    acc = beta_err = None
    t0 = time.perf_counter()
    try:
        if method == "plugin":
            theta, fit = ctx.pipeline_factory(sc).run(n, stream, ledger)
            if fit.beta_vector.size == 1:
                diag["beta_hat"] = float(fit.beta_vector[0])
            diag["clamped"] = fit.clamped
            if ctx.proxy is not None:
                beta_err = sc.beta_distance(fit, ctx.proxy)
        else:
            base = method[: -len("_tuned")] if method.endswith("_tuned") else method
            hyper = ctx.tuned[base][n] if base != method else sc.hyper[base]
            trace = run_with_budget(base, sc.baseline_map, sc.loss, sc.ball, n, hyper, stream.child("baseline"),
                                    ledger)
            theta = trace.final
            diag.update({f"hp_{k}": v for k, v in sorted(hyper.items())})
            diag["discarded"] = trace.leftover
            diag["backend"] = trace.backend
            fallbacks = sum(1 for _, f in trace.flags if f == "fallback_greedy")
            if base == "perfgd":
                diag["greedy_fallbacks"] = fallbacks
        if ledger.consumed != n:
            raise RuntimeError(f"budget mismatch: consumed {ledger.consumed} of {n}")
        excess = _score(sc, theta, ctx.oracle, stream)
        if not math.isfinite(excess):
            raise FloatingPointError("non-finite excess risk")
        acc = sc.accuracy(theta, stream.child("accuracy").generator())
        diag["theta_norm"] = float(np.linalg.norm(theta))
    except Exception as err:  # one failed cell must not abort the sweep
        excess = float("nan")
        diag["error"] = f"{type(err).__name__}: {err}".replace("\n", " ")
    elapsed = int(round((time.perf_counter() - t0) * 1000))
    return ExperimentRecord(sc.name, sc.hash, method, n, rep, seed, excess, acc, beta_err, elapsed,
                            _fmt_diag(diag))


def _worker(args):
    return _run_cell(_CTX, *args)


def _tune_all(sc: Scenario, plan: RunPlanConfig, methods) -> dict:
    tuned: dict = {}
    for method in methods:
        grid = dict(default_grid(method))
        grid.update(plan.grids.get(method, {}))
        tuned[method] = {}
        for n in plan.budgets:
            ledger = SampleLedger(None, "tuning")
            rng = RngStream(cell_seed(plan.seed, f"tune:{method}", n, 0))

            def score(theta):
                return performative_risk(sc.baseline_map, theta, sc.loss)[0]

            best, _ = tune_baseline(method, sc.baseline_map, sc.loss, sc.ball, n, score, rng, grid, ledger)
            best["m"] = int(best["m"])
            tuned[method][n] = best
    return tuned


def resolve_methods(sc: Scenario, plan: RunPlanConfig) -> tuple:
    methods = sc.config["methods"] or plan.methods
    bad = [m for m in methods if m not in sc.applicable()]
    if bad:
        raise ConfigError(f"scenario {sc.name!r} ({sc.kind}) does not support methods {bad}")
    return tuple(methods)


def scenario_oracle(sc: Scenario, seed: int, cache: Optional[OracleCache] = None) -> OracleResult:
    if cache is not None and sc.hash in cache:
        return cache.get(sc.hash)
    result = sc.oracle(seed)
    if cache is not None:
        cache.put(sc.hash, result)
    return result


def run_experiment(
    scenario: ScenarioConfig | Scenario,
    plan: RunPlanConfig,
    jobs: Optional[int] = None,
    cache: Optional[OracleCache] = None,
    pipeline_factory: type = PluginPipeline,
) -> list[ExperimentRecord]:
    """Run every (method, n, rep) cell of ``plan`` on one scenario.

    Each cell draws from its own seed, derived from the master seed, method,
    budget and repetition, so the records do not depend on ``jobs``.
    Tuned baselines (``plan.tune``) appear as extra methods ``<name>_tuned``;
    their tuning samples are counted on a separate ledger.
    """
    global _CTX
    plan.validate()
    sc = scenario if isinstance(scenario, Scenario) else build_scenario(scenario, plan.hyper)
    methods = resolve_methods(sc, plan)
    oracle = scenario_oracle(sc, plan.seed, cache)
    proxy = None
    if "plugin" in methods:
        proxy = sc.proxy_fit(RngStream(cell_seed(plan.seed, "proxy", 0, 0)))
    baselines = [m for m in methods if m != "plugin"]
    tuned = _tune_all(sc, plan, baselines) if plan.tune else {}
    all_methods = list(methods) + [f"{m}_tuned" for m in tuned]
    cells = [(m, n, r) for m in all_methods for n in plan.budgets for r in range(plan.repetitions)]
    ctx = _Context(sc, plan, oracle, proxy, tuned, pipeline_factory)
    jobs = default_jobs() if jobs is None else max(int(jobs), 1)
    if jobs == 1 or len(cells) == 1:
        records = [_run_cell(ctx, *c) for c in cells]
    else:
        _CTX = ctx
        try:
            with ProcessPoolExecutor(jobs, mp_context=mp.get_context("fork")) as pool:
                records = list(pool.map(_worker, cells, chunksize=max(len(cells) // (4 * jobs), 1)))
        finally:
            _CTX = None
    return sorted(records, key=lambda r: (r.method, r.n, r.rep))
