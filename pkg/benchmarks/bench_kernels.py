"""Compiled vs pure-Python kernel timings.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from perflab import _backend
from perflab.core import sample_unit_sphere
from perflab.maps import LocationQuadMap, make_logistic_base


def _cases(seed: int = 0):
    gen = np.random.default_rng(seed)
    X0, y, _ = make_logistic_base(5000, 5, seed)
    theta = gen.standard_normal(5) / 3
    mask = np.ones(5)
    yield "strat_reg_risk_grad (n=5000, d=5)", "strat_reg_risk_grad", (X0, y, theta, 2.0, mask, 1e-3)

    d, T, m = 5, 2000, 10
    lm = LocationQuadMap.generate(d, 0.5, 0.5, seed)
    theta0 = np.full(d, 1 / np.sqrt(d))
    ctr = np.zeros(d)
    U = sample_unit_sphere(d, gen, (T, m))
    Z = 0.5 * gen.standard_normal((T, m, d))
    yield f"location_dfo_loop (T={T}, m={m}, d={d})", "location_dfo_loop", \
        (theta0, lm.b, lm.M1, lm.M2, lm.s, 0.01, 0.5, ctr, 0.5, U, Z)
    yield f"location_sgd_loop (T={T}, m={m}, d={d})", "location_sgd_loop", \
        (theta0, lm.b, lm.M1, lm.M2, lm.s, 0.5, ctr, 1.0, Z)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _backend.available()
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':44s}" + "".join(f"{b:>14s}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for label, name, fn_args in _cases():
        times = []
        for b in backends:
            fn = getattr(_backend.kernels(b), name)
            fn(*fn_args)  # warm-up
            number = 3
            times.append(min(timeit.repeat(lambda: fn(*fn_args), number=number, repeat=args.repeat)) / number)
        row = f"{label:44s}" + "".join(f"{t * 1e3:11.3f} ms" for t in times)
        if len(times) > 1:
            row += f"   {times[0] / times[1]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
