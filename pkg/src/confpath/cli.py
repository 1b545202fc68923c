"""Command-line interface: conformal sets, path traces, benchmarks, validation.

Exit codes: 0 success, 1 invariant failure, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .bench import (
    Friedman1Spec,
    LinearSpec,
    cross_validate_lambda,
    gen_friedman1,
    gen_linear,
    load_csv,
    results_to_csv,
    run_benchmark,
    standardize,
)
from .conformal import (
    assemble_absolute_residual_set,
    assemble_generic_set,
    make_measure,
    wrap_sets,
)
from .errors import ConfigError, ConvergenceError
from .homotopy import build_path
from .losses import make_loss
from .optim import Dataset, SolverConfig
from .regularizers import make_regularizer
from .validate import FAULT_MODES, run_invariants


def _add_data_options(p):
    src = p.add_argument_group("data source")
    src.add_argument("--data", help="CSV file with a header row")
    src.add_argument("--label", default="y", help="label column name for --data")
    src.add_argument("--synthetic", choices=["linear", "friedman1"],
                     help="generate data instead of reading a CSV")
    src.add_argument("--n", type=int, default=100)
    src.add_argument("--p", type=int, default=20)
    src.add_argument("--noise", type=float, default=1.0)
    src.add_argument("--informative", type=int, default=None)
    src.add_argument("--standardize", action="store_true",
                     help="unit-norm columns and z-scored labels")
    src.add_argument("--test-row", type=int, default=-1,
                     help="row held out as the test point (default: last)")


def _add_model_options(p):
    mod = p.add_argument_group("model")
    mod.add_argument("--loss", default="quadratic",
                     choices=["quadratic", "power", "logcosh", "linex"])
    mod.add_argument("--loss-param", type=float, default=None,
                     help="exponent q for power, scale gamma for logcosh/linex")
    mod.add_argument("--reg", default="ridge", choices=["ridge", "l1"])
    mod.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="regularization weight (default: cross-validated)")


def _add_set_options(p, eps_list=False):
    cp = p.add_argument_group("conformal parameters")
    cp.add_argument("--alpha", type=float, default=0.1)
    if eps_list:
        cp.add_argument("--epsilon", default="1e-2",
                        help="comma-separated gap tolerances for the label sweep")
    else:
        cp.add_argument("--epsilon", type=float, default=1e-2, help="gap tolerance")
    cp.add_argument("--epsilon0", type=float, default=None,
                    help="solver tolerance per grid point (default: epsilon/10)")
    cp.add_argument("--range-min", type=float, default=None)
    cp.add_argument("--range-max", type=float, default=None)
    cp.add_argument("--measure", default="absolute-residual",
                    choices=["absolute-residual", "gradient"])
    cp.add_argument("--mode", default="halved", choices=["halved", "one-sided"])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="confpath",
        description="Full conformal prediction sets from certified approximate "
                    "solution paths.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("conformal", help="compute a conformal set for one test point")
    _add_data_options(pc)
    _add_model_options(pc)
    _add_set_options(pc)
    pc.add_argument("--wrap", action="store_true",
                    help="also emit inner/outer wrapping sets (strongly convex "
                         "regularizer only)")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--output", help="output file (default: stdout)")
    pc.add_argument("--figure", help="render a figure of the set to this file")

    pt = sub.add_parser("trace", help="emit the certified grid: z, gap, prediction")
    _add_data_options(pt)
    _add_model_options(pt)
    _add_set_options(pt)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--output", help="output file (default: stdout)")
    pt.add_argument("--format", default="text", choices=["csv", "text"])

    pb = sub.add_parser("benchmark", help="coverage/length/time over held-out splits")
    _add_data_options(pb)
    _add_model_options(pb)
    _add_set_options(pb, eps_list=True)
    pb.add_argument("--methods", default="oracle,split,homotopy",
                    help="comma list from: oracle, split, homotopy, ridge-exact")
    pb.add_argument("--repetitions", type=int, default=100)
    pb.add_argument("--split-fraction", type=float, default=0.7)
    pb.add_argument("--jobs", type=int, default=1,
                    help="parallel workers for repetitions")
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--output", help="results CSV (default: stdout)")
    pb.add_argument("--figure", help="render summary figure to this file")

    pv = sub.add_parser("validate", help="run the invariant suite")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--inject-fault", default="none", choices=list(FAULT_MODES),
                    help="deliberately break a property to prove the suite catches it")
    return parser


def _load_dataset(args) -> Dataset:
    if args.data and args.synthetic:
        raise ConfigError("choose either --data or --synthetic, not both")
    if args.data:
        data = load_csv(args.data, args.label)
    elif args.synthetic == "linear":
        data = gen_linear(LinearSpec(n=args.n, p=args.p, noise=args.noise,
                                     informative=args.informative, seed=args.seed))
    elif args.synthetic == "friedman1":
        data = gen_friedman1(Friedman1Spec(n=args.n, p=args.p, seed=args.seed))
    else:
        raise ConfigError("no data source: pass --data FILE or --synthetic KIND")
    if args.standardize:
        data = standardize(data)
    return data


def _split_test_row(data, test_row):
    idx = test_row if test_row >= 0 else data.n + test_row
    if not 0 <= idx < data.n:
        raise ConfigError(f"--test-row {test_row} outside the {data.n} rows")
    mask = np.ones(data.n, dtype=bool)
    mask[idx] = False
    return Dataset(data.X[mask], data.y[mask]), data.X[idx], float(data.y[idx])


def _make_model(args):
    loss = make_loss(args.loss, args.loss_param)
    reg = make_regularizer(args.reg)
    return loss, reg


def _resolve_lambda(args, data, loss, reg):
    if args.lam is not None:
        if args.lam <= 0:
            raise ConfigError("--lambda must be positive")
        return args.lam
    return cross_validate_lambda(data, loss, reg, seed=args.seed)


def _resolve_range(args, data):
    lo = float(np.min(data.y)) if args.range_min is None else args.range_min
    hi = float(np.max(data.y)) if args.range_max is None else args.range_max
    if lo > hi:
        raise ConfigError("--range-min must not exceed --range-max")
    return lo, hi


def _build_cmd_path(args):
    data = _load_dataset(args)
    train, x_new, y_true = _split_test_row(data, args.test_row)
    loss, reg = _make_model(args)
    lam = _resolve_lambda(args, train, loss, reg)
    lo, hi = _resolve_range(args, train)
    path = build_path(train, x_new, lo, hi, args.epsilon, lam, loss, reg,
                      eps0=args.epsilon0, mode=args.mode)
    return path, y_true


def _write_text(text, output):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_conformal(args) -> int:
    path, _ = _build_cmd_path(args)
    measure = make_measure(args.measure)
    if args.measure == "absolute-residual":
        union = assemble_absolute_residual_set(path, args.alpha)
    else:
        union = assemble_generic_set(path, args.alpha, measure)
    doc = {
        "intervals": union.to_pairs(),
        "total_length": union.total_length,
        "grid_points": len(path),
        "epsilon": path.eps,
        "alpha": args.alpha,
        "range_min": path.y_min,
        "range_max": path.y_max,
    }
    if args.wrap:
        nu = _wrap_curvature(path)
        lower, upper = wrap_sets(path, args.alpha, nu=nu)
        doc["lower_intervals"] = lower.to_pairs()
        doc["upper_intervals"] = upper.to_pairs()
    _write_text(json.dumps(doc, indent=2) + "\n", args.output)
    if args.figure:
        from .report import render_conformal_figure

        render_conformal_figure(doc, list(path.records()), args.figure)
    return 0


def _wrap_curvature(path):
    if not path.loss.local_curvature:
        return path.loss.regularity().nu
    delta = max(
        max(abs(path.y_min - u), abs(path.y_max - u)) for u in path.preds
    )
    return path.loss.regularity(delta_max=delta).nu


def cmd_trace(args) -> int:
    path, _ = _build_cmd_path(args)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["z", "gap", "prediction"])
        for z, gap, pred in path.records():
            writer.writerow([repr(z), repr(gap), repr(pred)])
        _write_text(buf.getvalue(), args.output)
        print(f"T_eps={len(path)} s_eps={path.step!r}", file=sys.stderr)
    else:
        lines = [f"z={z!r} gap={gap!r} prediction={pred!r}"
                 for z, gap, pred in path.records()]
        lines.append(f"T_eps={len(path)} s_eps={path.step!r}")
        _write_text("\n".join(lines) + "\n", args.output)
    return 0


def cmd_benchmark(args) -> int:
    data = _load_dataset(args)
    loss, reg = _make_model(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        eps_list = [float(e) for e in str(args.epsilon).split(",") if e.strip()]
    except ValueError:
        raise ConfigError(f"bad --epsilon list {args.epsilon!r}") from None
    lam = _resolve_lambda(args, data, loss, reg)
    results = run_benchmark(
        data, methods, args.alpha, eps_list=eps_list, repetitions=args.repetitions,
        lam=lam, seed=args.seed, split_fraction=args.split_fraction, loss=loss,
        reg=reg, measure=args.measure.replace("-", "_"), mode=args.mode,
        jobs=args.jobs,
    )
    if args.output:
        results_to_csv(results, args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["method", "alpha", "epsilon", "coverage", "mean_length",
                         "unbounded_count", "mean_time_s", "repetitions"])
        for r in results:
            writer.writerow([r.method, repr(r.alpha),
                             "" if r.epsilon is None else repr(r.epsilon),
                             repr(r.coverage),
                             "" if r.mean_length is None else repr(r.mean_length),
                             r.unbounded_count, repr(r.mean_time_s), r.repetitions])
        sys.stdout.write(buf.getvalue())
    loss_note = 2.0 / data.n  # range restriction to the observed labels
    print(f"lambda={lam!r}; range-restriction coverage loss <= {loss_note:.4f}",
          file=sys.stderr)
    for r in results:
        if r.failures:
            print(f"warning: {r.method} eps={r.epsilon}: {r.failures} failed reps",
                  file=sys.stderr)
    if args.figure:
        from .report import render_benchmark_figure

        render_benchmark_figure(results, args.figure)
    return 0


def cmd_validate(args) -> int:
    results = run_invariants(seed=args.seed, fault=args.inject_fault)
    width = max(len(r.name) for r in results)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
    if failed:
        print(f"first failing invariant: {failed[0].name}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "conformal": cmd_conformal,
        "trace": cmd_trace,
        "benchmark": cmd_benchmark,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
