"""Command-line entry point.

Exit status: 0 when every assertion holds, 1 on an assertion failure,
2 on a configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .experiments import (
    csv_text,
    emit_csv,
    run_complexity,
    run_end_to_end,
    run_export_model,
    run_longtime,
    run_picard_convergence,
    run_positivity,
    run_rank_study,
    run_sanity,
)
from .nonlinearity_net import SignPropertyError
from .picard_core import AdmissibilityError
from .semigroup_kernel import TruncationError

RUNNERS = {
    "sanity": run_sanity,
    "converge": run_picard_convergence,
    "rank": run_rank_study,
    "e2e": run_end_to_end,
    "complexity": run_complexity,
    "longtime": run_longtime,
    "positivity": run_positivity,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="picard-no", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(RUNNERS) + ["export-model"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="key = value configuration file")
        p.add_argument("--out", type=Path, default=None,
                       help="CSV path (directory for export-model); defaults to stdout")
        p.add_argument("--seed", type=int, default=None, help="override u0_seed")
        p.add_argument("--mode", choices=("certified", "practical"), default=None, help="override mode")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["u0_seed"] = args.seed
        if args.mode is not None:
            changes["mode"] = args.mode
        if changes:
            cfg = dataclasses.replace(cfg, **changes)
        if args.command == "export-model":
            out = args.out or Path("model")
            info = run_export_model(cfg, out)
            print(" ".join(f"{k}={v}" for k, v in info.items()) + f" dir={out}")
            return 0
        record = RUNNERS[args.command](cfg)
    except (ConfigError, AdmissibilityError, SignPropertyError, TruncationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.out is None:
        sys.stdout.write(csv_text(record))
    else:
        emit_csv(record, args.out)
    for failure in record.failures:
        print(f"FAIL {failure}", file=sys.stderr)
    status = "PASS" if record.passed else "FAIL"
    print(f"{status} {record.experiment}: {len(record.rows)} rows, {len(record.failures)} failures, "
          f"{record.elapsed:.2f} s", file=sys.stderr)
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
