"""Command-line entry point: ``perflab run | oracle | plot | selftest``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import defaultdict

import numpy as np

from ..optimize import OracleCache
from .config import ConfigError, load_config
from .output import CsvFormatError, emit_csv, emit_plots
from .runner import default_jobs, run_experiment, scenario_oracle
from .scenarios import build_scenario


def _summary(records) -> str:
    by = defaultdict(list)
    for r in records:
        by[(r.experiment, r.method, r.n)].append(r.excess_risk)
    lines = []
    for exp in sorted({k[0] for k in by}):
        n_max = max(k[2] for k in by if k[0] == exp)
        for (e, method, n), vals in sorted(by.items()):
            if e == exp and n == n_max:
                v = np.asarray(vals, dtype=float)
                lines.append(f"{exp:>16s} {method:>12s} n={n:<8d} excess={np.nanmean(v):.4g} +- {np.nanstd(v):.2g}"
                             f" failed={int(np.isnan(v).sum())}")
    return "\n".join(lines)


def _cmd_run(args) -> int:
    scenarios, plan = load_config(args.config)
    out = args.out or plan.out
    os.makedirs(out, exist_ok=True)
    cache = OracleCache(os.path.join(out, "oracle.tsv"))
    jobs = args.jobs or default_jobs()
    records = []
    for cfg in scenarios:
        print(f"[{cfg.name}] kind={cfg.kind} hash={cfg.hash}", flush=True)
        records.extend(run_experiment(cfg, plan, jobs=jobs, cache=cache))
    csv_path = emit_csv(records, os.path.join(out, "results.csv"), timing=not args.no_timing)
    print(_summary(records))
    print(f"wrote {csv_path}")
    if not args.no_plots:
        for p in emit_plots(csv_path, os.path.join(out, "plots")):
            print(f"wrote {p}")
    return 0


def _cmd_oracle(args) -> int:
    scenarios, plan = load_config(args.config)
    out = args.out or plan.out
    os.makedirs(out, exist_ok=True)
    cache = OracleCache(os.path.join(out, "oracle.tsv"))
    for cfg in scenarios:
        sc = build_scenario(cfg, plan.hyper)
        res = scenario_oracle(sc, plan.seed, cache)
        theta = ",".join(f"{v:.6g}" for v in np.atleast_1d(res.theta))
        flags = f" flags={';'.join(res.flags)}" if res.flags else ""
        print(f"{cfg.name}\t{cfg.hash}\ttheta=[{theta}]\tPR={res.risk:.9g}\tmode={res.mode}{flags}")
    return 0


def _cmd_plot(args) -> int:
    for p in emit_plots(args.csv, args.out, floor=args.floor):
        print(f"wrote {p}")
    return 0


def _cmd_selftest(args) -> int:
    from .. import selftest

    return 0 if selftest.run_all(verbose=True) else 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perflab", description="Plug-in performative optimization experiments")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every scenario in a config and write CSV and plots")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=None, help="worker processes (default: $PERFLAB_JOBS or 1)")
    r.add_argument("--out", default=None, help="output directory (default: plan.out)")
    r.add_argument("--no-timing", action="store_true", help="write elapsed_ms as 0 for byte-stable output")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=_cmd_run)
    o = sub.add_parser("oracle", help="compute or show the cached true optimum per scenario")
    o.add_argument("--config", required=True)
    o.add_argument("--out", default=None)
    o.set_defaults(func=_cmd_oracle)
    pl = sub.add_parser("plot", help="render SVG figures from a results CSV")
    pl.add_argument("--csv", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--floor", type=float, default=1e-8)
    pl.set_defaults(func=_cmd_plot)
    s = sub.add_parser("selftest", help="run the built-in property checks")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CsvFormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:
        print(f"runtime failure: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
