"""Batch command-line front end.

Commands: synth-gen, dataset-build, train-channel, train-nowcast, evaluate,
report. Every command takes --config (TOML) and writes a run.json manifest
beside its outputs. Exit codes: 0 success, 1 usage/config error, 2
data/format error, 3 numeric failure.

HELIOS_THREADS caps worker threads; it is exported to the BLAS thread
variables before numpy loads, so heavy imports stay inside main().
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap() -> None:
    raw = os.environ.get("HELIOS_THREADS", "").strip()
    if raw:
        for var in (
            "OPENBLAS_NUM_THREADS",
            "OMP_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helios",
        description="Satellite channel forecasting and solar nowcasting pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--fold", type=int, default=None, help="fold index override")
        p.add_argument("--seed", type=int, default=None, help="root seed override")

    p = sub.add_parser("synth-gen", help="generate synthetic site-cube directories")
    common(p)
    p.add_argument("--out", default=None, help="output directory (default: paths.data_root)")

    p = sub.add_parser("dataset-build", help="build and cache sequence samples")
    common(p)

    p = sub.add_parser("train-channel", help="train a channel model on one fold")
    common(p)
    p.add_argument(
        "--model",
        required=True,
        choices=("persistence", "tree", "forest", "cnnlstm"),
    )
    p.add_argument("--steps", type=int, default=None, help="history length override")

    p = sub.add_parser("train-nowcast", help="train per-site SVR nowcasters")
    common(p)

    p = sub.add_parser("evaluate", help="evaluate models on the fold's test days")
    common(p)
    p.add_argument("--four-way", action="store_true", help="end-to-end solar comparison")
    p.add_argument(
        "--models",
        default="persistence,tree,forest,cnnlstm",
        help="comma-separated channel models to include",
    )

    p = sub.add_parser("report", help="re-emit SVG charts from a report CSV")
    common(p)
    p.add_argument("--input", required=True, help="EvalReport CSV path")

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1

    from .errors import (
        ConfigError,
        FormatViolation,
        HeliosError,
        NonFiniteInput,
        NonFiniteLoss,
    )

    try:
        from . import commands

        return commands.run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteLoss, NonFiniteInput) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (FormatViolation, HeliosError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
