"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 input error, 3 estimation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from .data import ColumnMapping, read_csv, write_csv
from .effects import EFFECT_KEYS, EFFECT_LABELS, EffectReport
from .errors import EstimationError, IngestError, MediationError, SpecError
from .gmm import HacConfig
from .lsem import LsemSpec, simulate, true_effects_from_structural
from .numerics import default_threads
from .pipeline import analyze
from .validation import SUITES, run_suite

EXIT_OK, EXIT_VALIDATION, EXIT_INPUT, EXIT_ESTIMATION = 0, 1, 2, 3


def _fail(err: Exception, code: int) -> int:
    name = err.name if isinstance(err, MediationError) else type(err).__name__
    print(json.dumps({"error": name, "message": str(err)}), file=sys.stderr)
    return code


def format_pct(fraction: float) -> str:
    return f"{100.0 * fraction:.4f}%"


def format_se(se: float) -> str:
    return f"{se:.6g}"


def render_text(report: EffectReport) -> str:
    control, treated = report.arm_summaries
    header = ("Effect", "% Change", "Effect", "Std Error", "Std Error (%)", "z", "p-value")
    rows = []
    for key in EFFECT_KEYS:
        e = getattr(report, key)
        rows.append((
            EFFECT_LABELS[key],
            format_pct(e.pct_change) + e.stars,
            f"{e.value:.6g}",
            format_se(e.std_error),
            format_pct(e.std_error_pct),
            f"{e.z_stat:.4f}",
            f"{e.p_value:.4g}",
        ))
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    rule = "-" * len(fmt(header))
    lines = [
        f"Control: n={control.count}, mean outcome={control.mean_outcome:.6g}, mean mediator={control.mean_mediator:.6g}",
        f"Treatment: n={treated.count}, mean outcome={treated.mean_outcome:.6g}, mean mediator={treated.mean_mediator:.6g}",
        rule, fmt(header), rule, *map(fmt, rows), rule,
        "1) % Change = Effect/Mean of Control",
        "2) '***' p<0.001, '**' p<0.01, '*' p<0.05, '.' p<0.1 (two-tailed z-test, H0: effect is zero)",
    ]
    return "\n".join(lines) + "\n"


def render_csv(report: EffectReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["effect", "value", "std_error", "z_stat", "p_value", "pct_change", "std_error_pct", "stars"])
    for key in EFFECT_KEYS:
        e = getattr(report, key)
        w.writerow([EFFECT_LABELS[key], repr(e.value), repr(e.std_error), repr(e.z_stat), repr(e.p_value),
                    repr(e.pct_change), repr(e.std_error_pct), e.stars])
    return buf.getvalue()


def render_json(report: EffectReport, fit=None) -> str:
    d = report.to_dict()
    if fit is not None:
        d["fit"] = {
            "iterations": fit.iterations,
            "converged": fit.converged,
            "n": fit.n,
            "kernel": fit.config.kernel,
            "bandwidth": fit.bandwidth,
            "omega": fit.omega.tolist(),
        }
    return json.dumps(d, indent=2) + "\n"


def _bandwidth(text: str):
    if text == "auto":
        return "auto"
    try:
        h = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be 'auto' or an integer, got {text!r}")
    if h < 0:
        raise argparse.ArgumentTypeError("bandwidth must be nonnegative")
    return h


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def cmd_analyze(args) -> int:
    mapping = ColumnMapping(args.treatment_col, args.mediator_col, args.outcome_col)
    try:
        table = read_csv(args.input, mapping)
    except IngestError as err:
        return _fail(err, EXIT_INPUT)
    except OSError as err:
        return _fail(err, EXIT_INPUT)
    try:
        report, fit = analyze(table, HacConfig(args.kernel, args.bandwidth), args.tol, args.max_iter, args.threads)
    except EstimationError as err:
        return _fail(err, EXIT_ESTIMATION)
    if args.format == "json":
        out = render_json(report, fit)
    elif args.format == "csv":
        out = render_csv(report)
    else:
        out = render_text(report)
    sys.stdout.write(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        spec = LsemSpec.from_json(args.spec)
        truth = true_effects_from_structural(spec)
    except SpecError as err:
        return _fail(err, EXIT_INPUT)
    except OSError as err:
        return _fail(err, EXIT_INPUT)
    table = simulate(spec, args.n, args.seed)
    write_csv(table, f"{args.out}.csv")
    payload = {"n": args.n, "seed": args.seed, **truth.to_dict()}
    with open(f"{args.out}.truth.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    checks, elapsed = run_suite(args.suite, args.reps, args.seed)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{args.suite}: {'PASS' if ok else 'FAIL'} ({sum(c.passed for c in checks)}/{len(checks)} checks, {elapsed:.1f}s)")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abmediation", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads for row reductions (default: $ABMEDIATION_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate direct and indirect effects from a CSV")
    a.add_argument("--input", required=True)
    a.add_argument("--treatment-col", required=True)
    a.add_argument("--mediator-col", required=True)
    a.add_argument("--outcome-col", required=True)
    a.add_argument("--kernel", choices=["lag0", "bartlett"], default="lag0")
    a.add_argument("--bandwidth", type=_bandwidth, default="auto")
    a.add_argument("--tol", type=_positive_float, default=1e-8)
    a.add_argument("--max-iter", type=_positive_int, default=100)
    a.add_argument("--format", choices=["text", "json", "csv"], default="text")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="simulate a dataset and its ground truth from an LSEM spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.truth.json")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="run a self-checking Monte Carlo suite")
    v.add_argument("--suite", choices=sorted(SUITES), required=True)
    v.add_argument("--reps", type=_positive_int, default=None)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        try:
            args.threads = default_threads()
        except ValueError as err:
            return _fail(err, EXIT_INPUT)
    if args.command == "simulate" and args.n < 4:
        return _fail(ValueError("--n must be at least 4"), EXIT_INPUT)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
