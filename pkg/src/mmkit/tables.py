"""Regenerate the iteration tables for the worked examples.

Each function returns a list of row tuples at full precision; rounding for
display is done by :func:`round_half_up` when the rows are written out.
"""

from __future__ import annotations

import csv
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .core import StoppingRule
from .grouped_exp import MEILIJSON_DATA, GroupedExpData, fit_grouped
from .power_series import (
    LOGARITHMIC,
    TRUNCATED_POISSON,
    PowerSeriesSample,
    fit_power_series,
)
from .random_graph import fit_graph, graph_simulate, graph_stationarity

__all__ = [
    "round_half_up",
    "power_series_table",
    "table1",
    "table2",
    "table3",
    "grouped_table",
    "graph_experiment",
    "write_rows",
]


def round_half_up(x: float, digits: int = 5) -> str:
    if not np.isfinite(x):
        return "nan"
    q = Decimal(1).scaleb(-digits)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def power_series_table(family, xbar, m, theta0, rule: StoppingRule, **kwargs):
    trace, report = fit_power_series(family, PowerSeriesSample(xbar, m), theta0, rule, **kwargs)
    rows = [(e.n, float(e.theta[0]), e.f) for e in trace]
    return rows, report


def table1():
    """Truncated Poisson, xbar = 2, m = 10, theta0 = 1, iterations 0..13."""
    rows, _ = power_series_table(
        TRUNCATED_POISSON, 2.0, 10, 1.0, StoppingRule(max_iterations=13, param_tol=None)
    )
    return rows


def table2():
    """Logarithmic, xbar = 2, m = 10, theta0 = 0.99, iterations 0..17."""
    rows, _ = power_series_table(
        LOGARITHMIC, 2.0, 10, 0.99, StoppingRule(max_iterations=17, param_tol=None)
    )
    return rows


def grouped_table(data: GroupedExpData, lambda0: float, rule: StoppingRule, **kwargs):
    """Rows ``(n, lambda_MM, L_MM, lambda_EM, L_EM)``; a finished column is left as None."""
    mm, mm_report = fit_grouped(data, lambda0, "mm", rule, **kwargs)
    em, em_report = fit_grouped(data, lambda0, "em", rule, **kwargs)
    rows = []
    for n in range(max(len(mm), len(em))):
        a = mm[n] if n < len(mm) else None
        b = em[n] if n < len(em) else None
        rows.append((
            n,
            None if a is None else float(a.theta[0]),
            None if a is None else a.f,
            None if b is None else float(b.theta[0]),
            None if b is None else b.f,
        ))
    return rows, mm_report, em_report


def table3():
    """Grouped exponential toy data, lambda0 = 1, iterations 0..7 for MM and EM."""
    rows, _, _ = grouped_table(MEILIJSON_DATA, 1.0, StoppingRule(max_iterations=7, param_tol=None))
    return rows


def graph_experiment(m: int = 10_000, seed: int = 0, rule: StoppingRule = StoppingRule(max_iterations=500, param_tol=1e-9)):
    """Simulate with propensities ``(i - 1/2) / m`` and refit from the background start.

    Returns ``(rows, summary)``; rows are ``(n, p_first, p_middle, p_last, L)``.
    """
    truth = (np.arange(1, m + 1) - 0.5) / m
    graph = graph_simulate(truth, seed)
    picks = (0, m // 2, m - 1)
    rows = []

    def record(entry):
        rows.append((entry.n, *(float(entry.theta[i]) for i in picks), entry.f))

    trace, report = fit_graph(graph, rule=rule, store_iterates=False, callback=record)
    first = trace[0]
    rows.insert(0, (0, *(float(first.theta[i]) for i in picks), first.f))
    p = report.theta_final
    err = np.abs(p - truth)
    f = trace.objectives
    drops = np.diff(f)
    summary = {
        "m": m,
        "edges": graph.n_edges,
        "iterations": report.iterations,
        "status": report.status,
        "max_relative_decrease": float(max(0.0, -drops.min(initial=0.0)) / abs(f[-1])),
        "stationarity": float(np.abs(graph_stationarity(graph, p)).max(initial=0.0)),
        "mean_abs_error": float(err.mean()),
        "max_abs_error": float(err.max()),
    }
    return rows, summary


def write_rows(fh, header, rows, digits: int | None = 5) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        out = []
        for v in row:
            if v is None:
                out.append("")
            elif isinstance(v, (int, np.integer)):
                out.append(str(v))
            elif digits is None:
                out.append(f"{v:.10g}")
            else:
                out.append(round_half_up(v, digits))
        writer.writerow(out)
