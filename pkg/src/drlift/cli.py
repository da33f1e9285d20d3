"""Command-line entry point: ``drlift <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .problems import PRESETS

SUBCOMMANDS = ("run", "crossover", "sensitivity", "clusters", "hdr-sweep", "tables")

DEFAULT_PRESET = {
    "run": "newsvendor-T4",
    "crossover": "newsvendor-T8",
    "sensitivity": "transport-3x2-T6",
    "clusters": "transport-10x10-T10",
    "hdr-sweep": "transport-10x10-T10",
    "tables": "newsvendor-T4",
}

DEFAULT_PROFILES = ["3^2,2^6,1^0,0^1", "3^2,2^5,1^1,0^1", "3^3,2^4,1^1,0^1"]


def _solver(text: str) -> str:
    if text == "builtin" or text in ("auto", "simplex", "highs") or text.startswith("external:"):
        return text
    raise argparse.ArgumentTypeError(f"unknown solver {text!r}")


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlift", description="Decision-rule experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--preset", default=None, choices=sorted(PRESETS))
        p.add_argument("--strategies", default=None,
                       help="comma-separated strategies (LDR, PLDR-k, PLDR-1@5, PLDR-2[0.35,0.65], HDR<3^2,2^6,1^0,0^1>)")
        p.add_argument("--n", type=_positive, default=100_000, help="simulation sample count")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", type=Path, default=Path("results") / name)
        p.add_argument("--heavy", action="store_true", help="include PLDR-3 and finer runs")
        p.add_argument("--solver", type=_solver, default="builtin",
                       help="builtin (dense simplex for small LPs, HiGHS otherwise) or external:<command>")
        if name == "crossover":
            p.add_argument("--limits", default=None, help="comma-separated ordering limits (default 5..10 step 0.25)")
        if name == "hdr-sweep":
            p.add_argument("--profiles", default=None, help="semicolon-separated resolution profiles")
            p.add_argument("--no-reverse", action="store_true")
        if name == "sensitivity":
            p.add_argument("--bases", default="LDR,PLDR-5")
        if name == "clusters":
            p.add_argument("--sizes", default=None, help="breakpoint counts (default 1,2 or 1-4 with --heavy)")
    return parser


def _solver_name(text: str) -> str:
    return "auto" if text == "builtin" else text


def _write_rows(out: Path, name: str, rows: list[dict], config: dict) -> Path:
    writer = ex.RunWriter(out, config, sorted({k for r in rows for k in r}) or ["status"])
    writer.rows = rows
    return writer.finish(name)[0]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    preset_name = args.preset or DEFAULT_PRESET[args.command]
    solver = _solver_name(args.solver)
    strategies = ex.split_strategies(args.strategies) if args.strategies is not None else None

    if args.command == "run":
        path = ex.run_experiment(preset_name, strategies or [], args.n, args.seed, args.out, solver)
    elif args.command == "crossover":
        limits = None if args.limits is None else [float(u) for u in args.limits.split(",")]
        horizon = PRESETS[preset_name]().horizon if preset_name.startswith("newsvendor") else 8
        ex.crossover_sweep(limits, horizon, args.n, args.seed, solver, args.out)
        path = args.out / "crossover.csv"
    elif args.command == "sensitivity":
        ex.sensitivity_sweep(preset_name, ex.split_strategies(args.bases), solver=solver, out=args.out)
        path = args.out / "sensitivity.csv"
    elif args.command == "clusters":
        if args.sizes is not None:
            sizes = [int(k) for k in args.sizes.split(",")]
        else:
            sizes = [1, 2, 3, 4] if args.heavy else [1, 2]
        ex.clusters(preset_name, sizes, solver, args.out)
        path = args.out / "clusters.csv"
    elif args.command == "hdr-sweep":
        profiles = DEFAULT_PROFILES if args.profiles is None else [p.strip() for p in args.profiles.split(";")]
        ex.hdr_sweep(profiles, preset_name, not args.no_reverse, solver, args.out)
        path = args.out / "hdr_sweep.csv"
    else:
        config = {"command": "tables", "preset": preset_name, "n": args.n, "heavy": args.heavy, "solver": solver}
        if preset_name.startswith("newsvendor"):
            rows = ex.newsvendor_table(args.n, solver=solver)
        else:
            rows = ex.transport_table(preset_name, strategies, args.heavy, solver)
        path = _write_rows(args.out, "tables", rows, config)
    print(json.dumps({"command": args.command, "csv": str(path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
