"""Command-line interface.

Subcommands:

* ``run``    execute a query against a built-in variant or a ``.chr`` file,
             printing the final store and the query-variable bindings
             (``--trace`` prints the transition trace first);
* ``verify`` lockstep-check both variants against the imperative
             references and the brute-force partition over random
             workloads, reporting the first divergence minimized;
* ``bench``  run scaling workloads and write the counter CSV.

Exit codes: 0 success, 1 failure or divergence or runtime error, 2 parse
or usage error.  Output is deterministic for fixed flags (the CSV wall_ns
column is the only measurement that varies between runs).
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import (
    CSV_HEADER,
    gen_random_workload,
    report_csv,
    report_table,
    scaling_report,
)
from .engine import CompileError, EngineError, run
from .parser import ParseError
from .programs import Variant, program_source
from .store import MODES
from .terms import render_term
from .verify import check_seed, minimize_ops, _SeedChecker

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2


def _env_presize() -> int | None:
    raw = os.environ.get("CHR_STORE_PRESIZE")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        return None


def _add_store_flags(p: argparse.ArgumentParser):
    p.add_argument("--store", choices=MODES, default="doubling",
                   help="store mode: presized | doubling | poor")
    p.add_argument("--presize", type=int, default=None,
                   help="initial index capacity (default: CHR_STORE_PRESIZE)")


def _resolve_presize(args) -> int | None:
    if args.presize is not None:
        return args.presize
    if args.store == "presized":
        return _env_presize() or 1 << 16
    return _env_presize()


def cmd_run(args) -> int:
    if args.program is not None:
        try:
            with open(args.program, "r", encoding="utf-8") as fh:
                program_text = fh.read()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL
    else:
        program_text = program_source(Variant.parse(args.variant))
    if args.query is not None:
        query_text = args.query
    else:
        try:
            with open(args.query_file, "r", encoding="utf-8") as fh:
                query_text = fh.read()
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAIL

    try:
        result = run(program_text, query_text, store_mode=args.store,
                     presize=_resolve_presize(args), trace=args.trace)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CompileError as exc:
        print(f"compile error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    if result.trace is not None:
        for line in result.trace:
            print(line)
    if result.status == "fail":
        print(f"failure: {result.message}")
        return EXIT_FAIL
    if result.status == "error":
        print(f"error: {result.message}", file=sys.stderr)
        return EXIT_FAIL
    for line in result.store_text:
        print(line)
    for name, value in result.bindings.items():
        rendered = "_" if value is None else render_term(value)
        print(f"{name} = {rendered}")
    return EXIT_OK


def cmd_verify(args) -> int:
    failures = 0
    for seed in range(args.seed, args.seed + args.seeds):
        report = check_seed(args.n, seed, op_count=args.ops,
                            check_invariants=args.invariants,
                            store_mode=args.store,
                            swap_link_rules=args.swap_link_rules)
        if report.divergence is None:
            print(f"seed {seed}: ok ({report.ops_checked} ops)")
            continue
        failures += 1
        print(f"seed {seed}: DIVERGENCE at op {report.divergence.op_index}")
        print(f"  {report.divergence.describe()}")
        prefix = report.ops[: report.divergence.op_index + 1]

        def diverges(ops, _seed=seed):
            checker = _SeedChecker(_seed, ops, check_invariants=args.invariants,
                                   store_mode=args.store,
                                   swap_link_rules=args.swap_link_rules)
            return checker.run().divergence is not None

        small = minimize_ops(prefix, diverges)
        print(f"  minimized to {len(small)} ops:")
        for op in small:
            print(f"    {' '.join(str(p) for p in op)}")
        if not args.keep_going:
            break
    if failures:
        print(f"verify: {failures} diverging seed(s)")
        return EXIT_FAIL
    print(f"verify: all {args.seeds} seeds equivalent (n={args.n})")
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = []
    seen = set()
    for n in args.sizes:
        if n in seen:
            print(f"warning: duplicate size {n} ignored", file=sys.stderr)
            continue
        seen.add(n)
        sizes.append(n)
    rows = scaling_report(args.variant, args.workload, sizes,
                          repetitions=args.reps, store_mode=args.store,
                          presize=_resolve_presize(args), seed=args.seed,
                          contrived_finds=not args.no_finds)
    print(report_table(rows))
    if args.csv is not None:
        try:
            with open(args.csv, "w", encoding="utf-8") as fh:
                fh.write(report_csv(rows))
        except OSError as exc:
            print(f"error: cannot write CSV: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"csv written: {args.csv}")
    return EXIT_OK


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _sizes(value: str) -> list[int]:
    return [int(s) for s in value.split(",") if s]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minichr",
        description="Miniature CHR engine with built-in union-find programs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a query against a program")
    src = p_run.add_mutually_exclusive_group(required=True)
    src.add_argument("--variant", choices=[v.value for v in Variant],
                     help="built-in program: basic | rank")
    src.add_argument("--program", help="path to a .chr rule file")
    q = p_run.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", help="query text, e.g. 'make(a), make(b), union(a,b).'")
    q.add_argument("--query-file", help="path to a query file")
    p_run.add_argument("--trace", action="store_true",
                       help="print one line per transition before the result")
    _add_store_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser(
        "verify", help="check both variants against the imperative references")
    p_verify.add_argument("--n", type=_positive, required=True,
                          help="element count per workload")
    p_verify.add_argument("--seeds", type=_positive, default=10,
                          help="number of consecutive seeds to run")
    p_verify.add_argument("--seed", type=int, default=0, help="first seed")
    p_verify.add_argument("--ops", type=_positive, default=None,
                          help="use a mixed union/find tail of this many ops "
                               "instead of N unions + N finds")
    p_verify.add_argument("--invariants", action="store_true",
                          help="also check the structural invariant suite")
    p_verify.add_argument("--keep-going", action="store_true",
                          help="do not stop at the first diverging seed")
    p_verify.add_argument("--swap-link-rules", action="store_true",
                          help=argparse.SUPPRESS)  # fault injection for tests
    _add_store_flags(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench", help="run scaling workloads, emit CSV")
    p_bench.add_argument("--variant",
                         choices=["basic", "rank", "naive_oracle", "rank_oracle"],
                         required=True)
    p_bench.add_argument("--workload", choices=["random", "contrived"],
                         required=True)
    p_bench.add_argument("--sizes", type=_sizes, required=True,
                         help="comma-separated element counts, ascending")
    p_bench.add_argument("--reps", type=_positive, default=1)
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--no-finds", action="store_true",
                         help="contrived workloads: skip the trailing finds")
    p_bench.add_argument("--csv", help="output CSV path")
    _add_store_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
