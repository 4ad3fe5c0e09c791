"""Experiment configuration: a flat INI file with one section per scenario and a ``[plan]``.

Example::

    [scenario.coin]
    kind = coin
    mu = 0.3
    eta = 0.0

    [plan]
    methods = plugin, dfo, sgd
    budgets = 500, 1000, 2000
    repetitions = 10
    seed = 0
    sgd.c0 = 1.0
    grid.dfo.c0 = 1e-4, 1e-3, 1e-2

Keys a section does not declare take the documented defaults; unknown keys are
errors.  The scenario hash covers every key after defaults are applied.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from typing import Any

__all__ = [
    "METHODS",
    "SCHEMAS",
    "ConfigError",
    "RunPlanConfig",
    "ScenarioConfig",
    "load_config",
    "parse_config",
]

METHODS = ("plugin", "dfo", "sgd", "perfgd")
DEFAULT_BUDGETS = (500, 1000, 2000, 4000, 8000, 16000, 32000)


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"not an integer: {v!r}")
    return int(f)


def _strlist(v: str) -> tuple:
    return tuple(x.strip() for x in v.split(",") if x.strip())


_COMMON = {
    "kind": (str, None),
    "radius": (float, 1.0),
    "methods": (_strlist, ()),
    "oracle_mode": (str, ""),
    "oracle_grid": (_int, 0),  # 0: per-kind default
    "proxy_n": (_int, 1_000_000),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "coin": {"mu": (float, 0.3), "eta": (float, 0.0), "beta_max": (float, 0.5 - 1e-6)},
    "location": {"d": (_int, 5), "s": (float, 0.0), "sigma": (float, 0.5), "map_seed": (_int, 1),
                 "intercept": (_bool, True)},
    "strat_reg": {"rho": (float, 2.0), "beta_tilde": (float, 2.0), "d_x": (_int, 5), "base_size": (_int, 5000),
                  "ridge": (float, 1e-3), "base_seed": (_int, 0), "manipulable": (_int, 0),
                  "beta_max": (float, 10.0), "synthetic_label": (str, "")},
    "strat_class": {"beta_true": (float, 0.5), "T": (float, 0.0), "d": (_int, 2), "base_size": (_int, 5000),
                    "base_seed": (_int, 0), "eps": (float, 0.01), "beta_max": (float, 2.0)},
}


def _canon(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_canon(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    params: tuple  # sorted (key, value) pairs, defaults applied

    def __getitem__(self, key: str):
        return dict(self.params)[key]

    def get(self, key: str, default=None):
        return dict(self.params).get(key, default)

    def canonical(self) -> str:
        lines = [f"kind={self.kind}"] + [f"{k}={_canon(v)}" for k, v in self.params]
        return "\n".join(sorted(lines))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def build(cls, name: str, kind: str, **overrides) -> "ScenarioConfig":
        """Programmatic construction with the same validation as the file format."""
        raw = {k: _canon(v) if not isinstance(v, str) else v for k, v in overrides.items()}
        raw["kind"] = kind
        return _scenario(name, raw)


@dataclass
class RunPlanConfig:
    methods: tuple = ("plugin", "dfo", "sgd")
    budgets: tuple = DEFAULT_BUDGETS
    repetitions: int = 10
    seed: int = 0
    tune: bool = False
    out: str = "results"
    hyper: dict = field(default_factory=dict)  # method -> {param: value}
    grids: dict = field(default_factory=dict)  # method -> {param: [values]}

    def validate(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not self.methods:
            raise ConfigError("plan lists no methods")
        b = list(self.budgets)
        if not b or any(x < 1 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ConfigError(f"budgets must be positive and strictly increasing, got {b}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


def _scenario(name: str, raw: dict) -> ScenarioConfig:
    kind = raw.get("kind")
    if kind not in SCHEMAS:
        raise ConfigError(f"scenario {name!r}: kind must be one of {sorted(SCHEMAS)}, got {kind!r}")
    schema = {**_COMMON, **SCHEMAS[kind]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"scenario {name!r}: unknown keys {unknown}")
    params = {}
    for key, (conv, default) in schema.items():
        if key == "kind":
            continue
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except ValueError as err:
                raise ConfigError(f"scenario {name!r}: bad value for {key}: {err}") from None
        else:
            params[key] = default
    bad = [m for m in params["methods"] if m not in METHODS]
    if bad:
        raise ConfigError(f"scenario {name!r}: unknown methods {bad}")
    if params["oracle_mode"] not in ("", "grid", "exact", "dfo"):
        raise ConfigError(f"scenario {name!r}: oracle_mode must be grid, exact or dfo")
    return ScenarioConfig(name, kind, tuple(sorted(params.items())))


def _number_list(v: str, conv=float) -> tuple:
    return tuple(conv(x) for x in _strlist(v))


def _plan(raw: dict) -> RunPlanConfig:
    plan = RunPlanConfig()
    try:
        for key, val in raw.items():
            if key == "methods":
                plan.methods = _strlist(val)
            elif key == "budgets":
                plan.budgets = _number_list(val, _int)
            elif key == "repetitions":
                plan.repetitions = _int(val)
            elif key == "seed":
                plan.seed = _int(val)
            elif key == "tune":
                plan.tune = _bool(val)
            elif key == "out":
                plan.out = val.strip()
            elif key.startswith("grid."):
                _, method, param = _split_key(key, 3)
                plan.grids.setdefault(method, {})[param] = list(_number_list(val))
            elif "." in key:
                method, param = _split_key(key, 2)
                plan.hyper.setdefault(method, {})[param] = float(val)
            else:
                raise ConfigError(f"plan: unknown key {key!r}")
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"plan: {err}") from None
    for method in list(plan.hyper) + list(plan.grids):
        if method not in METHODS or method == "plugin":
            raise ConfigError(f"plan: hyperparameters given for unknown baseline {method!r}")
    plan.validate()
    return plan


def _split_key(key: str, parts: int) -> list:
    out = key.split(".")
    if len(out) != parts or not all(out):
        raise ConfigError(f"plan: malformed key {key!r}")
    return out


def parse_config(text: str) -> tuple[list[ScenarioConfig], RunPlanConfig]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (e.g. T)
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unparseable config: {err}") from None
    scenarios = []
    plan = None
    for section in cp.sections():
        raw = dict(cp[section])
        if section == "plan":
            plan = _plan(raw)
        elif section.startswith("scenario."):
            scenarios.append(_scenario(section[len("scenario."):], raw))
        else:
            raise ConfigError(f"unknown section [{section}]")
    if not scenarios:
        raise ConfigError("config defines no [scenario.*] section")
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate scenario names")
    return scenarios, plan or _plan({})


def load_config(path: str) -> tuple[list[ScenarioConfig], RunPlanConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path!r}: {err}") from None
    return parse_config(text)
