"""Command-line front end: ``nestcheck check|bench|gen``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import bench_cluster
from .checker import DEFAULT_SCALE, EXACT_THRESHOLD
from .cluster import FLAT_SAFETY_BOUND, load_params, write_cluster_files
from .engine import Config, run_problem
from .errors import NestCheckError, ParseError
from .expr import parse_problem

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestcheck", description="Nested model checker.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="evaluate a nested model-checking problem")
    check.add_argument("--problem", required=True, type=Path, help=".nmc problem file")
    check.add_argument("--models", type=Path, default=Path("."), help="directory with .sm/.mm files")
    check.add_argument("--scale", type=_positive, default=DEFAULT_SCALE)
    check.add_argument("--jobs", type=_positive, default=None, help="worker count (default: CPU count)")
    check.add_argument("--no-cache", action="store_true")
    check.add_argument("--json", action="store_true", help="print the result and task reports as JSON")
    check.add_argument("--exact-threshold", type=int, default=EXACT_THRESHOLD)
    check.add_argument("--executor", choices=("auto", "inline", "process"), default="auto")

    bench = sub.add_parser("bench", help="benchmark the cluster case study")
    bench.add_argument("target", choices=("cluster",))
    bench.add_argument("--min-nodes", type=_positive, default=8)
    bench.add_argument("--max-nodes", type=_positive, default=34)
    bench.add_argument("--step", type=_positive, default=2)
    bench.add_argument("--mode", choices=("nested", "flat", "both"), default="both")
    bench.add_argument("--params", type=Path, default=None, help="parameter file (default: built-in)")
    bench.add_argument("--scale", type=_positive, default=DEFAULT_SCALE)
    bench.add_argument("--repeats", type=_positive, default=5)
    bench.add_argument("--jobs", type=_positive, default=None)
    bench.add_argument("--executor", choices=("auto", "inline", "process"), default="auto")
    bench.add_argument("--flat-limit", type=_positive, default=FLAT_SAFETY_BOUND,
                       help="largest cluster to flatten; larger sizes are reported as refused")
    bench.add_argument("--out", type=Path, default=None, help="write the JSON report here")

    gen = sub.add_parser("gen", help="write case-study model and problem files")
    gen.add_argument("target", choices=("cluster",))
    gen.add_argument("--nodes", type=_positive, required=True)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--params", type=Path, default=None)
    gen.add_argument("--scale", type=_positive, default=DEFAULT_SCALE)
    gen.add_argument("--no-flat", action="store_true", help="skip the flattened model")
    return parser


def _cmd_check(args) -> int:
    try:
        text = args.problem.read_text()
    except OSError as exc:
        print(f"error: cannot read problem file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problem = parse_problem(text)
    config = Config(models_dir=args.models, scale=args.scale, cache=not args.no_cache,
                    exact_threshold=args.exact_threshold, executor=args.executor,
                    **({} if args.jobs is None else {"jobs": args.jobs}))
    result = run_problem(problem, config)
    if args.json:
        print(json.dumps(result.to_json(), indent=2))
    else:
        print(result.value)
    return EXIT_OK


def _cmd_bench(args) -> int:
    params = load_params(args.params)
    sizes = range(args.min_nodes, args.max_nodes + 1, args.step)
    modes = ("nested", "flat") if args.mode == "both" else (args.mode,)
    report = bench_cluster(sizes, params, modes=modes, scale=args.scale, repeats=args.repeats,
                           jobs=args.jobs, executor=args.executor, flat_limit=args.flat_limit)
    print(report.to_table())
    if args.out:
        args.out.write_text(report.dumps() + "\n")
    return EXIT_OK


def _cmd_gen(args) -> int:
    params = load_params(args.params, nodes=args.nodes)
    files = write_cluster_files(params, args.out, scale=args.scale, flat=not args.no_flat)
    for path in files.values():
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    handler = {"check": _cmd_check, "bench": _cmd_bench, "gen": _cmd_gen}[args.command]
    try:
        return handler(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NestCheckError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
