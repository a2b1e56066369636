"""Command-line harness.

Subcommands:
  train    train an ensemble (checkpoints + loss curves, no metrics)
  sweep    full experiment: train along the sweep axis and evaluate metrics
  analyze  recompute metrics on existing checkpoints
  probe    estimate the task's memory demand
  report   re-emit report files from a saved bundle.json

Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .config import METRIC_NAMES, default_probe_config, parse_config
from .exceptions import ConfigError, NumericFailure
from .harness import analyze_checkpoints, emit_report, run_experiment
from .probes import estimate_memory_demand
from .rng import STREAM_PROBE, derive_seed

log = logging.getLogger("degenkit")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args) or 0
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except NumericFailure as exc:
        log.error("numeric failure: %s", exc)
        return 3
    except OSError as exc:
        log.error("i/o error: %s", exc)
        return 1


def build_parser():
    parser = argparse.ArgumentParser(prog="degenkit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, metrics_flag=False):
        p.add_argument("--config", required=True, type=Path, help="config file (YAML/JSON)")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seeds", type=int, default=None, help="override ensemble.n_seeds")
        p.add_argument(
            "--jobs", type=int, default=int(os.environ.get("DEGENKIT_JOBS", "1")),
            help="parallel training workers (default $DEGENKIT_JOBS or 1)",
        )
        if metrics_flag:
            p.add_argument(
                "--metric", action="append", choices=METRIC_NAMES, default=None,
                help="metric to compute (repeatable; default: metrics from the config)",
            )

    p_train = sub.add_parser("train", help="train an ensemble without metrics")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="train along the sweep axis and evaluate metrics")
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_analyze = sub.add_parser("analyze", help="compute metrics on existing checkpoints")
    add_common(p_analyze, metrics_flag=True)
    p_analyze.set_defaults(func=cmd_analyze)

    p_probe = sub.add_parser("probe", help="estimate task memory demand")
    p_probe.add_argument("--config", required=True, type=Path)
    p_probe.add_argument("--out", required=True, type=Path)
    p_probe.set_defaults(func=cmd_probe)

    p_report = sub.add_parser("report", help="re-emit report files from bundle.json")
    p_report.add_argument("--out", required=True, type=Path)
    p_report.set_defaults(func=cmd_report)
    return parser


def _load_config(args):
    try:
        text = args.config.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    cfg = parse_config(text)
    if getattr(args, "seeds", None):
        cfg = dataclasses.replace(
            cfg, ensemble=dataclasses.replace(cfg.ensemble, n_seeds=args.seeds)
        )
    return cfg


def cmd_train(args):
    cfg = _load_config(args)
    cfg = dataclasses.replace(cfg, metrics=())
    run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    log.info("ensemble trained; checkpoints and reports in %s", args.out)


def cmd_sweep(args):
    cfg = _load_config(args)
    run_experiment(cfg, out_dir=args.out, jobs=args.jobs)
    log.info("experiment complete; reports in %s", args.out)


def cmd_analyze(args):
    cfg = _load_config(args)
    metrics = tuple(args.metric) if args.metric else cfg.metrics
    if not metrics:
        raise ConfigError("no metrics requested (use --metric or set metrics in the config)")
    try:
        analyze_checkpoints(cfg, args.out, metrics, jobs=args.jobs)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    log.info("metrics recomputed; reports in %s", args.out)


def cmd_probe(args):
    cfg = _load_config(args)
    pcfg = cfg.metrics_cfg.probe or default_probe_config(cfg.task.kind)
    seed = derive_seed(STREAM_PROBE, cfg.ensemble.base_seed)
    h_star, curve = estimate_memory_demand(cfg.task, pcfg, seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "probe.json").write_text(
        json.dumps(
            {"task": cfg.task.kind.value, "h_star": h_star,
             "curve": {str(h): v for h, v in curve.items()}},
            sort_keys=True, indent=2,
        ) + "\n"
    )
    with open(args.out / "probe_curve.csv", "w") as f:
        f.write("h,mse\n")
        for h in sorted(curve):
            f.write(f"{h},{curve[h]!r}\n")
    log.info("memory demand h*=%d; curve written to %s", h_star, args.out)


def cmd_report(args):
    bundle_path = args.out / "bundle.json"
    if not bundle_path.exists():
        raise ConfigError(f"no bundle.json in {args.out}")
    bundle = json.loads(bundle_path.read_text())
    emit_report(bundle, args.out)
    log.info("report files refreshed in %s", args.out)


if __name__ == "__main__":
    sys.exit(main())
