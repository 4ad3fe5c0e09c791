"""CSV emission and figure rendering for sweep records."""

from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from typing import Iterable, Optional

import numpy as np

__all__ = ["CSV_HEADER", "CsvFormatError", "emit_csv", "emit_plots", "read_csv"]

CSV_HEADER = ("experiment", "scenario_hash", "method", "n", "rep", "seed", "excess_risk", "accuracy",
              "beta_err", "elapsed_ms", "diagnostics")
_FLOAT_FIELDS = ("excess_risk", "accuracy", "beta_err")
METRICS = ("excess_risk", "accuracy", "beta_err")


class CsvFormatError(ValueError):
    def __init__(self, path: str, line: int, message: str):
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _fmt_float(v: Optional[float]) -> str:
    if v is None:
        return ""
    return format(float(v), ".9g")


def emit_csv(records: Iterable, path: str, timing: bool = True) -> str:
    """Write records sorted by ``(method, n, rep)``; floats with 9 significant digits.

    ``timing=False`` writes ``elapsed_ms`` as 0 so reruns are byte-identical.
    """
    rows = sorted(records, key=lambda r: (r.method, r.n, r.rep, r.experiment))
    if not rows:
        raise ValueError("no records to write")
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.experiment, r.scenario_hash, r.method, int(r.n), int(r.rep), int(r.seed),
                        _fmt_float(r.excess_risk), _fmt_float(r.accuracy), _fmt_float(r.beta_err),
                        int(r.elapsed_ms) if timing else 0, r.diagnostics])
    return path


def read_csv(path: str) -> list[dict]:
    """Parse and validate a results CSV; errors name the offending line."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file") from None
        if tuple(header) != CSV_HEADER:
            raise CsvFormatError(path, 1, f"unexpected header {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CsvFormatError(path, line, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            rec = dict(zip(CSV_HEADER, row))
            try:
                rec["n"] = int(rec["n"])
                rec["rep"] = int(rec["rep"])
                rec["seed"] = int(rec["seed"])
                rec["elapsed_ms"] = int(rec["elapsed_ms"])
                for k in _FLOAT_FIELDS:
                    rec[k] = float(rec[k]) if rec[k] != "" else None
            except ValueError as err:
                raise CsvFormatError(path, line, str(err)) from None
            out.append(rec)
    if not out:
        raise CsvFormatError(path, 2, "no data rows")
    return out


def _series(rows: list[dict], metric: str) -> dict:
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        v = r[metric]
        if v is not None and math.isfinite(v):
            acc[r["method"]][r["n"]].append(v)
    out = {}
    for method, by_n in acc.items():
        ns = np.array(sorted(by_n))
        vals = [np.asarray(by_n[n]) for n in ns]
        out[method] = (ns, np.array([v.mean() for v in vals]), np.array([v.std() for v in vals]))
    return out


def emit_plots(csv_path: str, out_dir: str, floor: float = 1e-8) -> list[str]:
    """One SVG per (scenario, metric): mean over reps with a +-1 sd band on a log y-axis.

    Means at or below ``floor`` are drawn at ``floor`` and marked with a footnote.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "perflab"
    rows = read_csv(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    groups = defaultdict(list)
    for r in rows:
        groups[(r["experiment"], r["scenario_hash"])].append(r)
    written = []
    for (experiment, shash), grp in sorted(groups.items()):
        for metric in METRICS:
            series = _series(grp, metric)
            if not series:
                continue
            fig, ax = plt.subplots(figsize=(5.5, 4))
            clamped = False
            for method in sorted(series):
                ns, mean, sd = series[method]
                shown = np.maximum(mean, floor)
                clamped |= bool(np.any(mean <= floor))
                lo = np.maximum(mean - sd, floor)
                hi = np.maximum(mean + sd, floor)
                line, = ax.plot(ns, shown, marker="o", label=method)
                ax.fill_between(ns, lo, hi, color=line.get_color(), alpha=0.2)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("n (true samples)")
            ax.set_ylabel(metric.replace("_", " "))
            ax.set_title(f"{experiment} [{shash[:8]}]")
            ax.legend()
            if clamped:
                fig.text(0.01, 0.01, f"* nonpositive means drawn at {floor:g}", fontsize=7)
            path = os.path.join(out_dir, f"{experiment}_{metric}.svg")
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
