"""Command-line entry point: ``carpsim run`` and ``carpsim sweep``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .engine import FILE_KEYS, PROTOCOLS, ConfigError, config_from_mapping, load_config
from .experiment import (RunFailure, SweepSpec, format_csv, result_row, run_scenario,
                         run_sweep, write_outputs)

log = logging.getLogger("carpsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario file of key = value lines")
    for key in FILE_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, metavar=key.upper())
    p.add_argument("-v", "--verbose", action="store_true")


def _parse_list(text: str, kind=float) -> tuple:
    try:
        return tuple(kind(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carpsim",
                                     description="MANET routing simulator (CARP vs AOMDV)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and print its metrics row")
    _add_scenario_flags(run)
    run.add_argument("--trace", help="write the packet-level trace here")
    run.add_argument("--metric-trace", help="write per-node metric samples here")
    run.add_argument("--placement", help="write node positions at every waypoint here")
    run.add_argument("--out", help="write results.csv, scenario.cfg and plot.gp here")

    sweep = sub.add_parser("sweep", help="sweep pause time or node count over seeds")
    _add_scenario_flags(sweep)
    sweep.add_argument("--axis", required=True, help="pause or nodes")
    sweep.add_argument("--values", required=True, help="comma-separated axis values")
    sweep.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated seeds")
    sweep.add_argument("--protocols", default=",".join(PROTOCOLS))
    sweep.add_argument("--out", help="output directory (default: print CSV)")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return parser


def scenario_from_args(args: argparse.Namespace):
    base = load_config(args.config) if args.config else None
    flags = {k: getattr(args, k) for k in FILE_KEYS if getattr(args, k) is not None}
    return config_from_mapping(flags, base)


def _write_lines(path: Optional[str], lines: Optional[list[str]]) -> None:
    if path is None or lines is None:
        return
    with open(path, "w") as fh:
        fh.writelines(line + "\n" for line in lines)


def _cmd_run(args) -> int:
    cfg = scenario_from_args(args)
    res = run_scenario(cfg, trace=args.trace is not None,
                       metric_trace=args.metric_trace is not None,
                       placement_trace=args.placement is not None)
    _write_lines(args.trace, res.trace)
    _write_lines(args.metric_trace, res.metric_trace)
    _write_lines(args.placement, res.placement)
    rows = [result_row(res, "pause_time")]
    if args.out:
        write_outputs(args.out, rows, "pause_time", (cfg.protocol,), cfg)
    else:
        sys.stdout.write(format_csv(rows))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base = scenario_from_args(args)
    protocols = tuple(p.strip() for p in args.protocols.split(",") if p.strip())
    for p in protocols:
        if p not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {p!r}")
    spec = SweepSpec(args.axis, _parse_list(args.values), _parse_list(args.seeds, int), protocols)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    rows = run_sweep(spec, base, jobs=args.jobs)
    if args.out:
        write_outputs(args.out, rows, spec.axis, protocols, base)
        log.info("wrote %s", os.path.join(args.out, "results.csv"))
    else:
        sys.stdout.write(format_csv(rows))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except (ConfigError, OSError) as exc:
        print(f"carpsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"carpsim: run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
