"""Command-line interface: run missions, sweeps, validation and traces."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import validate as validation
from .experiments import (SCHEMES, run_mission, run_sweep, write_channel_dump,
                          write_mission_csv, write_trace_csv)
from .scenario import ConfigError, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSION_INFEASIBLE = 2
EXIT_VALIDATION_FAILURE = 3


def _parse_seeds(text: str) -> list:
    """'1..20' or comma-separated list."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marisac",
        description="Maritime UAV ISAC mission simulator and optimizer")
    parser.add_argument("--config", type=str, default=None,
                        help="flat key=value scenario file (defaults otherwise)")
    parser.add_argument("--seed", type=int, default=None, help="override the RNG seed")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run one mission and write its CSV")
    p_run.add_argument("--scheme", choices=SCHEMES, default="proposed")
    p_run.add_argument("--out", type=str, default=".", help="output directory")
    p_run.add_argument("--trace", action="store_true",
                       help="also write the per-iteration convergence CSV")
    p_run.add_argument("--dump-channels", action="store_true",
                       help="also write the channel realization CSV")

    p_sweep = sub.add_parser("sweep", help="run a schemes x seeds grid")
    p_sweep.add_argument("--schemes", type=str, default="proposed",
                         help="comma-separated scheme names")
    p_sweep.add_argument("--seeds", type=str, default="1..5",
                         help="'lo..hi' range or comma-separated seeds")
    p_sweep.add_argument("--out", type=str, default=".", help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel workers")

    sub.add_parser("validate", help="run the built-in property checks")

    p_trace = sub.add_parser("trace", help="single-frame convergence dump")
    p_trace.add_argument("--scheme", choices=SCHEMES, default="proposed")
    p_trace.add_argument("--frames", type=int, default=2,
                         help="number of frames to run and trace")
    p_trace.add_argument("--out", type=str, default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.command is None:
        parser.print_usage()
        return EXIT_USAGE

    try:
        cfg = load_config(args.config, seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    from .optimizer import MissionInfeasible

    if args.command == "run":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        try:
            trace = run_mission(cfg, args.scheme, collect_diagnostics=args.trace)
        except MissionInfeasible as exc:
            print(f"mission infeasible: {exc}", file=sys.stderr)
            return EXIT_MISSION_INFEASIBLE
        path = write_mission_csv(trace, out / f"mission_{args.scheme}_{cfg.seed}.csv")
        print(f"wrote {path}")
        if args.trace:
            tpath = write_trace_csv(trace, out / f"trace_{args.scheme}_{cfg.seed}.csv")
            print(f"wrote {tpath}")
        if args.dump_channels:
            cpath = write_channel_dump(cfg, trace,
                                       out / f"channels_{args.scheme}_{cfg.seed}.csv")
            print(f"wrote {cpath}")
        agg = trace.aggregate()
        print(f"90%-likely rate: {agg['rate_p10']:.4f} bit/s/Hz, "
              f"90%-likely MI: {agg['mi_p10']:.4f} bit/s/Hz, "
              f"out-of-service frames: {agg['oos_frames']}")
        return EXIT_OK

    if args.command == "sweep":
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        for s in schemes:
            if s not in SCHEMES:
                print(f"unknown scheme {s!r}", file=sys.stderr)
                return EXIT_USAGE
        seeds = _parse_seeds(args.seeds)
        try:
            aggregates = run_sweep(cfg, schemes, seeds, args.out, jobs=args.jobs)
        except MissionInfeasible as exc:
            print(f"mission infeasible: {exc}", file=sys.stderr)
            return EXIT_MISSION_INFEASIBLE
        print(f"wrote {len(aggregates)} mission files + aggregate.csv under {args.out}")
        return EXIT_OK

    if args.command == "validate":
        failures = validation.run_all(cfg)
        for name, ok, detail in failures:
            print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        if any(not ok for _, ok, _ in failures):
            return EXIT_VALIDATION_FAILURE
        return EXIT_OK

    if args.command == "trace":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        small = cfg.replace(n_frames=max(1, args.frames))
        try:
            trace = run_mission(small, args.scheme, collect_diagnostics=True)
        except MissionInfeasible as exc:
            print(f"mission infeasible: {exc}", file=sys.stderr)
            return EXIT_MISSION_INFEASIBLE
        path = write_trace_csv(trace, out / f"trace_{args.scheme}_{small.seed}.csv")
        print(f"wrote {path}")
        return EXIT_OK

    return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
