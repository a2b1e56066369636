#!/usr/bin/env python3
"""Run one of the bundled degeneracy sweeps and print the headline trends.

Usage:
    python scripts/run_degeneracy_sweep.py task_complexity_nbff results/tc
    python scripts/run_degeneracy_sweep.py feature_learning_nbff results/fl --jobs 4

Any YAML in scripts/configs/ works; pass a bare name or a path.
"""

import argparse
import sys
from pathlib import Path

from degenkit.config import parse_config
from degenkit.harness import run_experiment

CONFIG_DIR = Path(__file__).parent / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", help="bundled config name or path to a YAML file")
    ap.add_argument("out", type=Path, help="output directory")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seeds", type=int, default=None)
    args = ap.parse_args()

    path = Path(args.config)
    if not path.exists():
        path = CONFIG_DIR / f"{args.config}.yaml"
    cfg = parse_config(path.read_text())
    if args.seeds:
        import dataclasses

        cfg = dataclasses.replace(
            cfg, ensemble=dataclasses.replace(cfg.ensemble, n_seeds=args.seeds)
        )

    bundle = run_experiment(cfg, out_dir=args.out, jobs=args.jobs)

    print(f"\n{path.name}: degeneracy vs {bundle['sweep']['path']}")
    header = f"{'value':>10} {'dsa':>10} {'pif':>12} {'svcca':>10} {'sigma_ood':>12} {'wcn':>10} {'ka':>8}"
    print(header)
    for value in bundle["sweep"]["values"] or ["base"]:
        key = str(int(value)) if isinstance(value, float) and value == int(value) else str(value)
        mets = bundle["runs"][key]["metrics"]
        row = [f"{key:>10}"]
        row.append(f"{mets['dsa']['mean']:10.4f}" if "dsa" in mets else " " * 10)
        row.append(f"{mets['pif']['mean']:12.6f}" if "pif" in mets else " " * 12)
        row.append(f"{mets['svcca']['mean']:10.4f}" if "svcca" in mets else " " * 10)
        sig = mets.get("behavior", {}).get("sigma_ood")
        row.append(f"{sig:12.4f}" if sig is not None else " " * 12)
        fl = mets.get("feature_learning", {})
        row.append(f"{fl.get('mean_weight_change_norm', float('nan')):10.6f}" if fl else " " * 10)
        row.append(f"{fl.get('mean_kernel_alignment', float('nan')):8.4f}" if fl else " " * 8)
        print(" ".join(row))
    print(f"\nreports in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
