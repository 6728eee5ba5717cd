"""Command-line front end: ``qwsearch {ht,walk-verify,search,grid-bench,verify-all}``.

Records go to stdout as JSON lines (CSV for ``grid-bench``) unless
``--output`` names a file; relative output paths are placed under
``$QWSEARCH_OUTPUT_DIR`` when that variable is set.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 capacity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

from .errors import BudgetExceededError, CapacityError, QWSearchError
from .experiments import (
    DEFAULT_S_GRID,
    ConfigError,
    ExperimentConfig,
    cmd_grid_bench,
    cmd_ht,
    cmd_search,
    cmd_walk_verify,
    format_csv,
    to_json_line,
)

OUTPUT_ENV = "QWSEARCH_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3

log = logging.getLogger("qwsearch")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> tuple:
    """``"0-3,7"`` -> ``(0, 1, 2, 3, 7)``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like '0-3,7', got {text!r}") from None
    return tuple(out)


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--family", default="complete",
                   choices=["grid", "complete", "cycle", "hypercube", "file"])
    g.add_argument("--size", type=int, default=4,
                   help="n for complete/cycle, side for grid, dimension for hypercube")
    g.add_argument("--path", help="chain file for --family file")
    g.add_argument("--no-torus", dest="torus", action="store_false",
                   help="grid without wrap-around")
    g.add_argument("--lazy", action="store_true", help="use (I + P)/2")
    g.add_argument("--marked", type=_int_list, help="explicit marked vertices, e.g. 0,5")
    g.add_argument("--marked-count", type=int, default=1,
                   help="number of random marked vertices when --marked is absent")
    g.add_argument("--marked-seed", type=int, default=0)


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help=f"output file (relative paths go under ${OUTPUT_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qwsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ht", help="hitting times: matrix, spectral, s-curve, Monte Carlo")
    _add_instance_args(p)
    p.add_argument("--s-grid", type=_float_list, default=DEFAULT_S_GRID)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seeds", type=_int_list, default=(0,))
    _add_output_args(p)

    p = sub.add_parser("walk-verify", help="dense checks of the walk and the simulation circuit")
    _add_instance_args(p)
    p.add_argument("--s", type=float, default=0.5)
    _add_output_args(p)

    p = sub.add_parser("search", help="quantum walk search runs")
    _add_instance_args(p)
    which = p.add_mutually_exclusive_group()
    which.add_argument("--auto", action="store_true", help="doubling search over t")
    which.add_argument("--pmin", type=float, metavar="P_MIN", help="search given p_min <= p_M")
    which.add_argument("--htmax", type=float, metavar="HT_MAX", help="dichotomic search on p*")
    p.add_argument("--p-star", type=float, help="estimate of p_M (default: the true p_M)")
    bits = p.add_mutually_exclusive_group()
    bits.add_argument("--t", type=int, help="phase-estimation bits")
    bits.add_argument("--T", type=float, help="step budget; t = ceil(log2 T)")
    p.add_argument("--ht-max", type=float, help="hitting-time bound for the p_min search")
    p.add_argument("--mode", choices=["exact", "sample"], default="exact")
    p.add_argument("--backend", choices=["spectral", "dense"], default="spectral")
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--k", type=int, default=28, help="repetitions per level")
    p.add_argument("--repetitions-per-probe", type=int, default=29)
    _add_output_args(p)

    p = sub.add_parser("grid-bench", help="2D torus scaling table (CSV)")
    p.add_argument("--sides", type=_int_list, default=(4, 8, 16))
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seeds", type=_int_list, default=(0,))
    p.add_argument("--side-limit", type=int, default=16)
    _add_output_args(p)

    p = sub.add_parser("verify-all", help="run every invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="append", default=[], choices=["discriminant"],
                   help="corrupt one primitive to check that its suite notices")
    p.add_argument("--suite", action="append", help="run only the named suite(s)")
    _add_output_args(p)
    return parser


def _config(args, **extra) -> ExperimentConfig:
    fields = dict(
        family=args.family, size=args.size, path=args.path, torus=args.torus, lazy=args.lazy,
        marked=args.marked, marked_count=args.marked_count, marked_seed=args.marked_seed,
    )
    fields.update(extra)
    return ExperimentConfig(**fields)


def _output_path(name: str | None) -> Path | None:
    if not name:
        return None
    path = Path(name)
    base = os.environ.get(OUTPUT_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(text: str, args) -> None:
    path = _output_path(args.output)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)
        log.info("wrote %s", path)


def _lines(records) -> str:
    return "".join(to_json_line(r) + "\n" for r in records)


def run(args) -> int:
    cmd = args.command
    if cmd == "ht":
        records = cmd_ht(_config(args, s_grid=args.s_grid, trials=args.trials, seeds=args.seeds))
        _emit(_lines(records), args)
        return EXIT_OK
    if cmd == "walk-verify":
        report = cmd_walk_verify(_config(args, s=args.s))
        _emit(_lines([report]), args)
        return EXIT_OK if report["ok"] else EXIT_FAIL
    if cmd == "search":
        search = "auto" if args.auto else "pmin" if args.pmin is not None else (
            "htmax" if args.htmax is not None else "fixed")
        if search != "fixed" and (args.t is not None or args.T is not None):
            raise UsageError("--t/--T only apply to the fixed search")
        cfg = _config(
            args, search=search, p_star=args.p_star, t=args.t, T=args.T, mode=args.mode,
            backend=args.backend, seeds=args.seeds, k=args.k, p_min=args.pmin,
            ht_max=args.htmax if search == "htmax" else args.ht_max,
            repetitions_per_probe=args.repetitions_per_probe,
        )
        records = cmd_search(cfg)
        _emit(_lines(records), args)
        return EXIT_FAIL if any("error" in r for r in records) else EXIT_OK
    if cmd == "grid-bench":
        rows = cmd_grid_bench(args.sides, args.m, args.seeds, side_limit=args.side_limit)
        _emit(format_csv(rows), args)
        return EXIT_OK
    from .verify import SUITES, run_suites

    if args.suite:
        unknown = [s for s in args.suite if s not in SUITES]
        if unknown:
            raise UsageError(f"unknown suite(s): {', '.join(unknown)}")
    results = run_suites(args.seed, tuple(args.inject_fault), args.suite)
    records = [r.record() for r in results]
    summary = {"suite": "summary", "passed": sum(r.ok for r in results),
               "failed": sum(not r.ok for r in results), "faults": args.inject_fault,
               "seed": args.seed, "ok": all(r.ok for r in results)}
    _emit(_lines(records + [summary]), args)
    return EXIT_OK if summary["ok"] else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"qwsearch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return run(args)
    except (UsageError, ConfigError) as exc:
        print(f"qwsearch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"qwsearch: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (QWSearchError, BudgetExceededError) as exc:
        print(f"qwsearch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
