"""Command-line harness for seeded runs and parameter sweeps.

Subcommands:
    run-sensing   one sensing-centric run (CRB-trace minimization)
    run-comm      one communication-centric run (sum-rate maximization)
    sweep         run either algorithm across a list of parameter values

Configuration precedence is CLI flag > config file > built-in default; the
resolved configuration is recorded in the emitted manifest. Exit codes:
0 success, 2 infeasible instance, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .ao import InfeasibleProblemError
from .harness import (
    SETUPS,
    SWEEPABLE,
    TRACE_COLUMNS,
    ScenarioConfig,
    emit_results,
    load_config,
    run_single,
    run_sweep,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--setup", choices=SETUPS, help="antenna setup selector")
    parser.add_argument("--gamma-min-db", type=float, help="per-user SINR floor (dB)")
    parser.add_argument("--c-max", type=float, help="CRB-trace budget (comm mode)")
    parser.add_argument("--rotation-bits", type=int, help="discrete rotation bit depth")
    parser.add_argument("--out", default="rmaisac_out", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel sweep workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmaisac",
        description="Near-field ISAC experiments with rotatable movable antennas",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("run-sensing", "minimize the CRB trace subject to SINR floors"),
        ("run-comm", "maximize the sum rate subject to a CRB budget"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
    p = sub.add_parser("sweep", help="sweep one parameter over a value list")
    _add_common(p)
    p.add_argument("--mode", choices=("sensing", "comm"), required=True)
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument(
        "--values",
        required=True,
        help="comma-separated value list (setup names, or numbers)",
    )
    return parser


def _resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.setup is not None:
        overrides["setup"] = args.setup
    if args.gamma_min_db is not None:
        overrides["gamma_min_db"] = args.gamma_min_db
    if args.c_max is not None:
        overrides["c_max"] = args.c_max
    if args.rotation_bits is not None:
        overrides["rotation_bits"] = args.rotation_bits
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    return config


def _parse_values(parameter: str, raw: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if parameter == "setup":
        return items
    if parameter == "rotation_bits":
        return [None if v.lower() in ("none", "continuous") else int(v) for v in items]
    return [float(v) for v in items]


def _streaming_sink(out_dir: str):
    """Append trace rows to disk as the outer loop emits them."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "trace.csv")
    fh = open(path, "w", encoding="utf-8", newline="")
    writer = csv.DictWriter(fh, fieldnames=list(TRACE_COLUMNS))
    writer.writeheader()
    fh.flush()

    def sink(row):
        writer.writerow(row)
        fh.flush()

    return sink, fh


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR

    try:
        if args.command in ("run-sensing", "run-comm"):
            mode = "sensing" if args.command == "run-sensing" else "comm"
            sink, fh = _streaming_sink(args.out)
            try:
                result = run_single(config, mode, iteration_sink=sink)
            finally:
                fh.close()
            paths = emit_results([result], args.out, config, mode)
            print(f"wrote {paths['summary']}")
            if not result.feasible:
                print("run completed but failed the feasibility audit", file=sys.stderr)
            return EXIT_OK
        # sweep
        values = _parse_values(args.param, args.values)
        results = run_sweep(config, args.param, values, args.mode, workers=args.workers)
        paths = emit_results(
            results,
            args.out,
            config,
            args.mode,
            sweep={"parameter": args.param, "values": [str(v) for v in values]},
        )
        print(f"wrote {paths['summary']}")
        errors = [r for r in results if r.error]
        if errors and all(("Infeasible" in r.error) for r in errors):
            return EXIT_INFEASIBLE
        if errors:
            return EXIT_ERROR
        return EXIT_OK
    except InfeasibleProblemError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as err:  # surface anything else as a hard error
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
