"""Command-line entry point: ``cachelab simulate|sweep|contention|generate``.

Exit codes: 0 success, 1 configuration or usage error, 2 bad input data.
"""

from __future__ import annotations

import argparse
import sys
import warnings

from .config import ConfigError, load_config
from .contention import ContentionScenario, OutOfModelWarning, compare
from .engine import SimulationError, run_trace
from .report import (
    dump_json,
    load_sweep_spec,
    report_metadata,
    run_sweep,
    simreport_csv,
    sweep_csv,
    sweep_metadata,
    sweep_reports_csv,
)
from .workloads import GeneratorParams, TraceFormatError, Workload, emit_trace, generate, read_trace

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _fail(prefix: str, message: object, code: int) -> int:
    print(f"{prefix}: {message}", file=sys.stderr)
    return code


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
    except FileNotFoundError:
        return _fail("config error", f"cannot read {args.config}", EXIT_CONFIG)
    except ConfigError as exc:
        return _fail("config error", exc, EXIT_CONFIG)
    try:
        trace = read_trace(args.trace)
    except OSError:
        return _fail("trace error", f"cannot read {args.trace}", EXIT_DATA)
    except TraceFormatError as exc:
        return _fail("trace error", f"{args.trace}: {exc}", EXIT_DATA)
    if trace.core_count > config.core_count:
        return _fail(
            "trace error",
            f"{args.trace}: trace has cores={trace.core_count}, config has {config.core_count}",
            EXIT_DATA,
        )
    try:
        report = run_trace(config, trace, check_invariants=args.check)
    except SimulationError as exc:
        return _fail("trace error", exc, EXIT_DATA)
    _write(simreport_csv(report), args.out)
    if args.out not in (None, "-"):
        dump_json(report_metadata(report, config), args.out + ".meta.json")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        spec = load_sweep_spec(args.spec)
    except FileNotFoundError:
        return _fail("config error", f"cannot read sweep spec {args.spec}", EXIT_CONFIG)
    except ConfigError as exc:
        return _fail("config error", exc, EXIT_CONFIG)
    try:
        result = run_sweep(spec, jobs=args.jobs)
    except RuntimeError as exc:
        return _fail("sweep error", exc, EXIT_DATA)
    _write(sweep_csv(result), args.out)
    if args.out not in (None, "-"):
        _write(sweep_reports_csv(result), args.out + ".simreports.csv")
        dump_json(sweep_metadata(result), args.out + ".meta.json")
    return EXIT_OK


def cmd_contention(args) -> int:
    try:
        scenario = ContentionScenario(n=args.n, p=args.p, r=args.r, k=args.k)
        if args.k >= args.p:
            scenario.require_k()
    except ValueError as exc:
        return _fail("usage error", exc, EXIT_CONFIG)
    if args.trials < 1:
        return _fail("usage error", "--trials must be >= 1", EXIT_CONFIG)
    rows = compare(scenario, args.trials, args.seed)
    print(f"scenario n={scenario.n} p={scenario.p} r={scenario.r} k={scenario.k} "
          f"trials={args.trials} seed={args.seed}")
    print(f"{'quantity':<48} {'closed_form':>12} {'empirical':>12} {'std_error':>12} {'exact':>12}  flag")
    for row in rows:
        closed = "-" if row.closed_form is None else format(row.closed_form, ".6g")
        exact = "-" if row.exact is None else format(row.exact, ".6g")
        flags = []
        if row.closed_form is not None and row.closed_form > 1:
            flags.append("out-of-model")
        if row.agrees is False:
            flags.append("diverges")
        print(
            f"{row.quantity:<48} {closed:>12} {row.empirical.value:>12.6g} "
            f"{row.empirical.std_error:>12.6g} {exact:>12}  {','.join(flags)}"
        )
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        params = GeneratorParams(
            Workload(args.workload),
            cores=args.cores,
            scale=args.scale,
            iterations=args.iterations,
            seed=args.seed,
        )
    except ValueError as exc:
        return _fail("config error", exc, EXIT_CONFIG)
    trace = generate(params)
    if args.out in (None, "-"):
        emit_trace(trace, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            emit_trace(trace, fh)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cachelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one trace through one configuration")
    p.add_argument("--config", required=True, help="config file or preset:<name>")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--check", action="store_true", help="verify coherence invariants after every access")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep L2 sizes x core counts")
    p.add_argument("--spec", required=True, help="sweep spec file, or paper-grid / small-grid")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("contention", help="closed-form contention model vs Monte Carlo")
    p.add_argument("--n", type=int, required=True, help="cache blocks")
    p.add_argument("--p", type=int, default=2, help="cores")
    p.add_argument("--r", type=int, default=1, help="simultaneous requests")
    p.add_argument("--k", type=int, default=1, help="distinct values / operations")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_contention)

    p = sub.add_parser("generate", help="write a synthetic benchmark trace")
    p.add_argument("--workload", required=True, choices=[w.value for w in Workload])
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfModelWarning)
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
