#!/usr/bin/env python3
"""Estimate the intrinsic memory demand of each task with the MLP probe.

Usage:
    python scripts/run_memory_probe.py results/probe [--tasks nbff sine_wave]
"""

import argparse
import json
import sys
from pathlib import Path

from degenkit.config import default_probe_config
from degenkit.probes import estimate_memory_demand
from degenkit.tasks import (
    delayed_discrimination_spec,
    nbff_spec,
    path_integration_spec,
    sine_wave_spec,
)

SPECS = {
    "nbff": nbff_spec,
    "delayed_discrimination": delayed_discrimination_spec,
    "sine_wave": sine_wave_spec,
    "path_integration": path_integration_spec,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    ap.add_argument("--tasks", nargs="*", default=list(SPECS))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    results = {}
    for name in args.tasks:
        spec = SPECS[name]()
        cfg = default_probe_config(spec.kind)
        h_star, curve = estimate_memory_demand(spec, cfg, args.seed)
        results[name] = {"h_star": h_star, "curve": {str(h): v for h, v in curve.items()}}
        print(f"{name:26s} h* = {h_star}")
        for h in sorted(curve):
            print(f"    h={h:3d}  mse={curve[h]:.6g}")
    (args.out / "memory_demand.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
