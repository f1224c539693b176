"""Command-line front end.

Exit status: 0 on success, 2 on bad input, 3 when a solver reports
divergence (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from . import __version__
from .core import IterationTrace, StoppingRule, TraceEntry

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED = 0, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _shared(p, param_tol=1e-10):
    g = p.add_argument_group("iteration control")
    g.add_argument("--max-iter", type=_positive_int, default=1000, help="iteration cap (default 1000)")
    g.add_argument("--param-tol", type=float, default=param_tol,
                   help=f"stop when the sup-norm parameter step is at most this (default {param_tol:g}; negative disables)")
    g.add_argument("--obj-tol", type=float, default=None,
                   help="stop when the absolute objective change is at most this (default off)")
    g.add_argument("--seed", type=int, default=None, help="random seed (required by stochastic commands)")
    g.add_argument("--trace-out", metavar="CSV", default=None, help="write the iteration trace here")
    g.add_argument("--step-double", action="store_true", help="use guarded step doubling")


def _rule(args, max_iter=None):
    tol = None if args.param_tol is None or args.param_tol < 0 else args.param_tol
    obj = None if args.obj_tol is None or args.obj_tol < 0 else args.obj_tol
    return StoppingRule(max_iterations=max_iter or args.max_iter, param_tol=tol, objective_tol=obj)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _write_trace(args, trace):
    if args.trace_out:
        with open(args.trace_out, "w", newline="") as fh:
            trace.to_csv(fh)


def _history_trace(history, sense="minimize"):
    trace = IterationTrace()
    prev = None
    for n, f in enumerate(history):
        ok = prev is None or (f <= prev + 1e-12 * max(1.0, abs(prev)))
        trace.append(TraceEntry(n, None, f, ok))
        prev = f
    return trace


def _require_file(path):
    if not os.path.isfile(path):
        raise InputError(f"file not found: {path}")


def cmd_power_series(args):
    from .power_series import get_family
    from .tables import power_series_table, write_rows

    family = get_family(args.family)
    if not family.contains(args.theta0):
        raise InputError(f"--theta0 {args.theta0} outside the {family.name} domain {family.domain}")
    if args.xbar < 0 or args.m < 1:
        raise InputError("--xbar must be nonnegative and --m positive")
    rows, report = power_series_table(
        family, args.xbar, args.m, args.theta0, _rule(args), use_step_doubling=args.step_double
    )
    with _output(args.out) as fh:
        write_rows(fh, ["n", "theta", "loglik"], rows)
    if args.trace_out:
        from .power_series import PowerSeriesSample, fit_power_series
        trace, _ = fit_power_series(family, PowerSeriesSample(args.xbar, args.m), args.theta0,
                                    _rule(args), use_step_doubling=args.step_double)
        _write_trace(args, trace)
    if report.diverged:
        print(f"diverged: {report.message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_grouped(args):
    from .grouped_exp import GroupedExpData, fit_grouped
    from .tables import grouped_table, write_rows

    try:
        data = GroupedExpData(args.thresholds, args.counts)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if not args.lambda0 > 0:
        raise InputError("--lambda0 must be positive")
    rows, _, _ = grouped_table(data, args.lambda0, _rule(args), use_step_doubling=args.step_double)
    with _output(args.out) as fh:
        write_rows(fh, ["n", "lambda_mm", "loglik_mm", "lambda_em", "loglik_em"], rows)
    if args.trace_out:
        trace, _ = fit_grouped(data, args.lambda0, "mm", _rule(args), use_step_doubling=args.step_double)
        _write_trace(args, trace)
    return EXIT_OK


def cmd_mvt(args):
    from .mvt import fit_mvt, read_sample_csv

    _require_file(args.data)
    try:
        sample = read_sample_csv(args.data)
    except ValueError as exc:
        raise InputError(f"{args.data}: {exc}") from None
    if not args.nu > 0:
        raise InputError("--nu must be positive")
    params, trace, report = fit_mvt(sample, args.nu, args.variant, rule=_rule(args),
                                    use_step_doubling=args.step_double)
    _write_trace(args, trace)
    with _output(args.out) as fh:
        fh.write("parameter,row,col,value\n")
        for i, v in enumerate(params.mu):
            fh.write(f"mu,{i},,{v:.10g}\n")
        for i in range(sample.p):
            for j in range(sample.p):
                fh.write(f"omega,{i},{j},{params.omega[i, j]:.10g}\n")
    print(f"iterations={report.iterations} status={report.status}", file=sys.stderr)
    return EXIT_OK


def cmd_graph(args):
    from .random_graph import (
        fit_graph, graph_simulate, graph_stationarity, read_edge_list, write_propensities,
    )

    truth = None
    if args.simulate is not None:
        if args.seed is None:
            raise InputError("--seed is required with --simulate")
        m = args.simulate
        truth = (np.arange(1, m + 1) - 0.5) / m
        graph = graph_simulate(truth, args.seed)
    else:
        if args.edges is None:
            raise InputError("give --edges FILE or --simulate M")
        _require_file(args.edges)
        try:
            graph = read_edge_list(args.edges, args.nodes)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    try:
        trace, report = fit_graph(graph, rule=_rule(args, None), store_iterates=False,
                                  use_step_doubling=args.step_double)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_trace(args, trace)
    p = report.theta_final
    with _output(args.out) as fh:
        write_propensities(fh, graph, p)
    msg = f"iterations={report.iterations} status={report.status}"
    if not report.diverged:
        msg += f" stationarity={np.abs(graph_stationarity(graph, p)).max(initial=0.0):.3g}"
    if truth is not None:
        err = np.abs(p - truth)
        msg += f" mean_abs_error={err.mean():.4f} max_abs_error={err.max():.4f}"
    print(msg, file=sys.stderr)
    if report.diverged:
        print(f"diverged: {report.message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _fit_report(model, data, name):
    from .discriminant import training_error

    print(
        f"{name}: iterations={model.iterations} objective={model.objective:.10g} "
        f"training_error={training_error(model, data):.4f} seconds={model.seconds:.3f}"
    )


def _read_labeled(args):
    from .discriminant import read_labeled_csv

    _require_file(args.data)
    try:
        return read_labeled_csv(args.data, args.standardize)
    except ValueError as exc:
        raise InputError(f"{args.data}: {exc}") from None


def cmd_hinge(args):
    from .discriminant import hinge_mm_fit

    data = _read_labeled(args)
    if not data.is_binary and sorted(set(data.labels)) != [1, 2]:
        raise InputError("hinge needs labels in {-1, +1} or {1, 2}")
    model = hinge_mm_fit(data, args.lam, args.mode, _rule(args), eps_reg=args.eps_reg)
    _write_trace(args, _history_trace(model.history))
    with _output(args.out) as fh:
        fh.write("term,value\n")
        fh.write(f"alpha,{model.alpha:.10g}\n")
        for j, v in enumerate(model.beta):
            fh.write(f"beta_{j},{v:.10g}\n")
    _fit_report(model, data, "hinge")
    return EXIT_OK


def cmd_vda(args):
    from .discriminant import vda_fit

    data = _read_labeled(args)
    try:
        model = vda_fit(data, args.lam, args.eps, _rule(args))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write_trace(args, _history_trace(model.history))
    with _output(args.out) as fh:
        fh.write("row,intercept," + ",".join(f"a_{j}" for j in range(model.A.shape[1])) + "\n")
        for r in range(model.A.shape[0]):
            fh.write(f"{r},{model.b[r]:.10g}," + ",".join(f"{v:.10g}" for v in model.A[r]) + "\n")
    _fit_report(model, data, "vda")
    return EXIT_OK


def cmd_restore(args):
    from .imaging import TVConfig, read_mask, read_pgm, restore, write_pgm

    _require_file(args.image)
    try:
        y = read_pgm(args.image)
        mask = None
        if args.mask:
            _require_file(args.mask)
            mask = read_mask(args.mask, y.shape)
        config = TVConfig(args.lam, args.eps, args.sweeps, args.tol)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    mu, trace = restore(y, mask, config)
    _write_trace(args, trace)
    write_pgm(args.out, mu)
    print(f"sweeps={trace[-1].n} objective={trace[-1].f:.10g}", file=sys.stderr)
    return EXIT_OK


def cmd_tables(args):
    from .tables import graph_experiment, table1, table2, table3, write_rows

    which = {"1", "2", "3", "graph"} if args.which == "all" else {args.which}
    if "graph" in which and args.seed is None:
        raise InputError("--seed is required for the random graph experiment")
    os.makedirs(args.out_dir, exist_ok=True)

    def path(name):
        return os.path.join(args.out_dir, name)

    if "1" in which:
        with open(path("table1.csv"), "w", newline="") as fh:
            write_rows(fh, ["n", "theta", "loglik"], table1())
    if "2" in which:
        with open(path("table2.csv"), "w", newline="") as fh:
            write_rows(fh, ["n", "theta", "loglik"], table2())
    if "3" in which:
        with open(path("table3.csv"), "w", newline="") as fh:
            write_rows(fh, ["n", "lambda_mm", "loglik_mm", "lambda_em", "loglik_em"], table3())
    if "graph" in which:
        rows, summary = graph_experiment(args.graph_nodes, args.seed, _rule(args, None))
        with open(path("graph_experiment.csv"), "w", newline="") as fh:
            write_rows(fh, ["n", "p_first", "p_middle", "p_last", "loglik"], rows)
        print(" ".join(f"{k}={v}" for k, v in summary.items()), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mmkit", description="MM algorithms for estimation and image restoration.")
    parser.add_argument("--version", action="version", version=f"mmkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("power-series", help="functional iteration for power series families")
    p.add_argument("--family", required=True, choices=["trunc-poisson", "geometric", "logarithmic"])
    p.add_argument("--xbar", type=float, required=True, help="sample mean")
    p.add_argument("--m", type=_positive_int, required=True, help="sample size")
    p.add_argument("--theta0", type=float, required=True, help="starting value")
    p.add_argument("--out", default=None, help="table CSV (default stdout)")
    _shared(p)
    p.set_defaults(func=cmd_power_series)

    p = sub.add_parser("grouped-exp", help="MM and EM for grouped exponential data")
    p.add_argument("--thresholds", type=_floats, required=True, help="t_1,...,t_m")
    p.add_argument("--counts", type=_floats, required=True, help="c_0,...,c_m (last is right-censored)")
    p.add_argument("--lambda0", type=float, default=1.0, help="starting intensity (default 1)")
    p.add_argument("--out", default=None, help="table CSV (default stdout)")
    _shared(p)
    p.set_defaults(func=cmd_grouped)

    p = sub.add_parser("mvt", help="multivariate t location and scale")
    p.add_argument("--data", required=True, help="CSV, one observation per row")
    p.add_argument("--nu", type=float, required=True, help="degrees of freedom (fixed)")
    p.add_argument("--variant", choices=["em", "ktv"], default="ktv")
    p.add_argument("--out", default=None, help="parameter CSV (default stdout)")
    _shared(p)
    p.set_defaults(func=cmd_mvt)

    p = sub.add_parser("graph", help="random graph propensities")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--edges", default=None, help="edge list, one 'i j' pair per line, 0-based")
    src.add_argument("--simulate", type=_positive_int, default=None, metavar="M",
                     help="simulate M nodes with propensities (i - 1/2)/M (needs --seed)")
    p.add_argument("--nodes", type=_positive_int, default=None, help="node count (default max index + 1)")
    p.add_argument("--out", default=None, help="propensity CSV (default stdout)")
    _shared(p, param_tol=1e-9)
    p.set_defaults(func=cmd_graph)

    for name, helptext in (("hinge", "binary hinge-loss classifier"), ("vda", "vertex discriminant analysis")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True, help="CSV; last column is the label")
        p.add_argument("--lambda", dest="lam", type=float, default=1e-2, help="ridge weight (default 0.01)")
        p.add_argument("--standardize", action="store_true", help="z-score the features")
        p.add_argument("--out", default=None, help="coefficient CSV (default stdout)")
        if name == "hinge":
            p.add_argument("--mode", choices=["full-wls", "coordinate"], default="full-wls")
            p.add_argument("--eps-reg", type=float, default=1e-5, help="majorizer guard (default 1e-5)")
            _shared(p, param_tol=-1)
            p.set_defaults(func=cmd_hinge, obj_tol=1e-10, max_iter=5000)
        else:
            p.add_argument("--eps", type=float, default=None,
                           help="insensitivity radius (default 0.9999 x the overlap cutoff)")
            _shared(p, param_tol=-1)
            p.set_defaults(func=cmd_vda, obj_tol=1e-10, max_iter=5000)

    p = sub.add_parser("restore", help="total-variation denoising and inpainting")
    p.add_argument("--image", required=True, help="input P5 PGM")
    p.add_argument("--mask", default=None, help="P5 PGM mask, 0 = excluded, 255 = accepted")
    p.add_argument("--lambda", dest="lam", type=float, default=15.0, help="tuning constant (default 15)")
    p.add_argument("--eps", type=float, default=1.0, help="TV smoothing (default 1)")
    p.add_argument("--sweeps", type=_positive_int, default=100, help="maximum sweeps (default 100)")
    p.add_argument("--tol", type=float, default=1e-4, help="stop when no pixel moves more (default 1e-4)")
    p.add_argument("--out", required=True, help="output P5 PGM")
    _shared(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("tables", help="regenerate the worked-example tables")
    p.add_argument("--which", choices=["1", "2", "3", "graph", "all"], default="all")
    p.add_argument("--out-dir", default=".", help="directory for table CSVs")
    p.add_argument("--graph-nodes", type=_positive_int, default=10_000, help="nodes in the graph experiment")
    _shared(p, param_tol=1e-9)
    p.set_defaults(func=cmd_tables, max_iter=500)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"mmkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"mmkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
