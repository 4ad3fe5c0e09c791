"""Concrete scenarios: true map, loss, parameter ball, atlas, fitter and plug-in solver per kind."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from ..atlas import CoinAtlas, LinearUtility, LocationAtlas, StratClassAtlas, StratRegAtlas
from ..core import Dataset, LossFn, ParamBall, RngLike, deploy_and_collect
from ..core import logistic_ridge_loss, squared_loss, zero_one_loss
from ..mapfit import FitResult, fit_budget_boundary_mass, fit_coin_ls, fit_location_ls, fit_scalar_beta_ls
from ..maps import CoinMap, LocationQuadMap, NormalizedDeployment, StratClassMap, StrategicRhoMap
from ..maps import _normalize_rows, draw, make_logistic_base
from ..optimize import plug_in_optimize_gd, true_optimum_oracle
from .config import ConfigError, ScenarioConfig

__all__ = ["Scenario", "build_scenario", "DEFAULT_HYPER"]

# untuned baseline settings per scenario kind; plan keys override them
DEFAULT_HYPER = {
    "coin": {"dfo": {"c0": 0.1, "m": 10, "delta": 0.1}, "sgd": {"c0": 1.0, "m": 10},
             "perfgd": {"c0": 1.0, "m": 10}},
    "location": {"dfo": {"c0": 0.01, "m": 10, "delta": 0.5}, "sgd": {"c0": 0.5, "m": 10},
                 "perfgd": {"c0": 0.5, "m": 10}},
    "strat_reg": {"dfo": {"c0": 0.01, "m": 10, "delta": 0.5}, "sgd": {"c0": 1.0, "m": 10},
                  "perfgd": {"c0": 1.0, "m": 10}},
    "strat_class": {"dfo": {"c0": 0.05, "m": 10, "delta": 0.5}},
}

APPLICABLE = {
    "coin": ("plugin", "dfo", "sgd", "perfgd"),
    "location": ("plugin", "dfo", "sgd", "perfgd"),
    "strat_reg": ("plugin", "dfo", "sgd", "perfgd"),
    "strat_class": ("plugin", "dfo"),  # 0-1 loss: no gradient for SGD or PerfGD
}

ORACLE_MODE = {"coin": "grid", "location": "exact", "strat_reg": "exact", "strat_class": "grid"}
ORACLE_GRID = {"coin": 401, "strat_class": 61}


@dataclass
class Scenario:
    config: ScenarioConfig
    true_map: object
    baseline_map: object  # what deployments act on (unit-normalized for classification)
    loss: LossFn
    ball: ParamBall
    exploration: ParamBall
    atlas: object
    fitter: Callable[[Dataset], FitResult]
    solver: Callable[[object, RngLike], np.ndarray]
    beta_distance: Callable[[FitResult, FitResult], float]
    hyper: dict = field(default_factory=dict)
    accuracy_threshold: Optional[float] = None

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def hash(self) -> str:
        return self.config.hash

    def applicable(self) -> tuple:
        return APPLICABLE[self.kind]

    def oracle(self, seed: int = 0):
        mode = self.config["oracle_mode"] or ORACLE_MODE[self.kind]
        grid = self.config["oracle_grid"] or ORACLE_GRID.get(self.kind, 401)
        return true_optimum_oracle(self.baseline_map, self.loss, self.ball, mode=mode, seed=seed,
                                   grid_points=grid)

    def deploy(self, n: int, rng: RngLike, ledger=None) -> Dataset:
        return deploy_and_collect(self.baseline_map, n, rng, self.exploration, ledger)

    def proxy_fit(self, rng: RngLike) -> FitResult:
        """Population-parameter proxy: the fit on ``proxy_n`` fresh deployments."""
        return self.fitter(self.deploy(self.config["proxy_n"], rng))

    def accuracy(self, theta, rng: RngLike, m: int = 10_000) -> Optional[float]:
        """Share of a fresh post-response draw classified correctly by ``1{theta'x >= T}``."""
        if self.accuracy_threshold is None:
            return None
        theta = np.asarray(theta, dtype=float).reshape(-1)
        z = draw(self.baseline_map, theta, m, rng)
        x, y = z[:, :-1], z[:, -1]
        if self.kind == "strat_class":
            theta = _normalize_rows(theta[None, :])[0]  # the rule actually deployed
        pred = (x @ theta >= self.accuracy_threshold).astype(float)
        return float(np.mean(pred == y))


def _scalar_distance(a: FitResult, b: FitResult) -> float:
    return float(abs(a.beta_vector[0] - b.beta_vector[0]))


def _location_distance(a: FitResult, b: FitResult) -> float:
    return float(np.linalg.norm(a.beta.M - b.beta.M, 2))


def _build_coin(cfg: ScenarioConfig) -> Scenario:
    true_map = CoinMap(cfg["mu"], cfg["eta"])
    atlas = CoinAtlas(cfg["beta_max"])
    loss = squared_loss()
    ball = true_map.domain

    def solver(fit, rng):
        return plug_in_optimize_gd(atlas, fit.beta, loss, ball, rng=rng).theta

    return Scenario(cfg, true_map, true_map, loss, ball, ball, atlas,
                    lambda data: fit_coin_ls(data, cfg["beta_max"]), solver, _scalar_distance)


def _build_location(cfg: ScenarioConfig) -> Scenario:
    d = cfg["d"]
    true_map = LocationQuadMap.generate(d, cfg["s"], cfg["sigma"], cfg["map_seed"])
    atlas = LocationAtlas(d, intercept=cfg["intercept"])
    loss = squared_loss()
    ball = ParamBall(d, cfg["radius"])

    def solver(fit, rng):
        return plug_in_optimize_gd(atlas, fit.beta, loss, ball, rng=rng).theta

    return Scenario(cfg, true_map, true_map, loss, ball, ball, atlas,
                    lambda data: fit_location_ls(data, intercept=cfg["intercept"]), solver, _location_distance)


def _build_strat_reg(cfg: ScenarioConfig) -> Scenario:
    d = cfg["d_x"]
    X0, y, _ = make_logistic_base(cfg["base_size"], d, cfg["base_seed"])
    k = cfg["manipulable"]
    if not 0 <= k <= d:
        raise ConfigError(f"scenario {cfg.name!r}: manipulable must lie in [0, d_x]")
    mask = None if k in (0, d) else np.r_[np.ones(k), np.zeros(d - k)]
    true_map = StrategicRhoMap(X0, y, cfg["beta_tilde"], cfg["rho"], mask)
    utility = LinearUtility(mask)
    atlas = StratRegAtlas(X0, y, 0.0, cfg["beta_max"], utility)
    loss = logistic_ridge_loss(cfg["ridge"])
    ball = ParamBall(d, cfg["radius"])
    x_mean = X0.mean(axis=0)

    def fitter(data: Dataset) -> FitResult:
        # the learner knows the base sample, so its mean is removed before the ratio estimate
        zs = data.zs.copy()
        zs[:, :d] -= x_mean
        return fit_scalar_beta_ls(Dataset(data.thetas, zs, data.seed), utility.grad, 0.0, cfg["beta_max"], d)

    def solver(fit, rng):
        return plug_in_optimize_gd(atlas, fit.beta, loss, ball, rng=rng).theta

    return Scenario(cfg, true_map, true_map, loss, ball, ball, atlas, fitter, solver, _scalar_distance,
                    accuracy_threshold=0.0)


def _build_strat_class(cfg: ScenarioConfig) -> Scenario:
    d = cfg["d"]
    X0, y, _ = make_logistic_base(cfg["base_size"], d, cfg["base_seed"])
    T = cfg["T"]
    true_map = StratClassMap(X0, y, cfg["beta_true"], T)
    atlas = StratClassAtlas(X0, y, T, cfg["beta_max"])
    loss = zero_one_loss(T, normalize=True)
    ball = ParamBall(d, cfg["radius"])
    eps = cfg["eps"]

    def band_prob(beta: float) -> float:
        # standard normal base: every unit direction projects to N(0, 1)
        return float(norm.cdf(T) - norm.cdf(T - beta))

    def fitter(data: Dataset) -> FitResult:
        unit = Dataset(_normalize_rows(data.thetas), data.zs, data.seed)
        return fit_budget_boundary_mass(unit, band_prob, T, eps, cfg["beta_max"], d)

    def solver(fit, rng):
        member = NormalizedDeployment(atlas.as_map(fit.beta))
        grid = cfg["oracle_grid"] or ORACLE_GRID["strat_class"]
        return true_optimum_oracle(member, loss, ball, mode="grid", grid_points=grid).theta

    return Scenario(cfg, true_map, NormalizedDeployment(true_map), loss, ball, ball, atlas, fitter, solver,
                    _scalar_distance, accuracy_threshold=T)


_BUILDERS = {"coin": _build_coin, "location": _build_location, "strat_reg": _build_strat_reg,
             "strat_class": _build_strat_class}


def build_scenario(cfg: ScenarioConfig, plan_hyper: Optional[dict] = None) -> Scenario:
    try:
        sc = _BUILDERS[cfg.kind](cfg)
    except (ValueError, TypeError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"scenario {cfg.name!r}: {err}") from None
    hyper = {m: dict(v) for m, v in DEFAULT_HYPER[cfg.kind].items()}
    for method, params in (plan_hyper or {}).items():
        hyper.setdefault(method, {}).update(params)
    for params in hyper.values():
        if "m" in params:
            params["m"] = int(params["m"])
    sc.hyper = hyper
    return sc
