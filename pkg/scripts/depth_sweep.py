#!/usr/bin/env python3
"""Print depth, neuron count and rank of the constructed operator across eps.

Usage: python3 scripts/depth_sweep.py [config]
"""
import sys
from pathlib import Path

from picard_operator.config import parse_config
from picard_operator.experiments import run_complexity

cfg_path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "configs" / "complexity.cfg"
cfg = parse_config(cfg_path)
rec = run_complexity(cfg, cfg.eps_list)
print(f"{'eps':>8} {'J':>3} {'L':>4} {'H':>6} {'knots':>6} {'N':>8} {'C_used':>8}")
for row in rec.rows:
    print(f"{row['eps']:8.0e} {row['J']:3d} {row['L']:4d} {row['H']:6d} {row['knots']:6d} {row['N']:8d} {row['C_used']:8.3f}")
print(f"single envelope constant C = {rec.summary['C_fit']:.4f}")
