#!/usr/bin/env python3
"""Run every experiment configuration and write CSVs to a results directory.

Usage: python3 scripts/run_all.py [results_dir]
"""
import sys
from pathlib import Path

from picard_operator.cli import main

ROOT = Path(__file__).resolve().parent.parent
JOBS = [
    ("sanity", "e2e_practical"),
    ("converge", "certified"),
    ("rank", "rank"),
    ("e2e", "e2e_practical"),
    ("e2e", "certified"),
    ("complexity", "complexity"),
    ("longtime", "longtime"),
    ("positivity", "positivity"),
]


def run(out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = 0
    for command, cfg in JOBS:
        out = out_dir / f"{command}-{cfg}.csv"
        code = main([command, "--config", str(ROOT / "configs" / f"{cfg}.cfg"), "--out", str(out)])
        print(f"{command:<11} {cfg:<16} exit={code}")
        worst = max(worst, code)
    code = main(["export-model", "--config", str(ROOT / "configs" / "e2e_practical.cfg"),
                 "--out", str(out_dir / "model")])
    return max(worst, code)


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "results"))
