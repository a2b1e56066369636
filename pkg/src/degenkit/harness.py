"""Ensemble orchestration: train seeds, evaluate metrics, persist reports.

``run_experiment`` trains ``n_seeds`` networks per sweep value (seeds
``base_seed .. base_seed+n_seeds-1``), evaluates the requested metrics on
shared seeded evaluation/OOD batches, and assembles everything into a plain
JSON-serializable bundle. Reruns of the same config produce byte-identical
outputs: no timestamps are recorded and all solver randomness runs on fixed
streams.

Unconverged networks stay in the DSA/PIF/SVCCA ensembles (flagged in the
bundle, with converged-only means reported alongside); behavioral degeneracy
uses converged networks only.
"""

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .config import apply_sweep_value, config_hash, default_probe_config
from .dynamics import DistanceMatrix, mds_embed, mean_offdiagonal, pairwise_dsa, svcca_distance
from .exceptions import InsufficientData
from .feature_learning import (
    empirical_ntk,
    kernel_alignment,
    representation_alignment,
    weight_change_norm,
)
from .probes import estimate_memory_demand
from .rng import STREAM_EVAL, STREAM_NTK, STREAM_OOD, STREAM_PROBE, derive_seed
from .rnn import forward
from .tasks import generate, make_ood_variant
from .training import train
from .weights_behavior import behavioral_degeneracy, ood_eval, pif_distance

log = logging.getLogger(__name__)


def run_experiment(cfg, out_dir=None, jobs=1):
    """Execute the full experiment described by ``cfg``.

    Returns the results bundle (a plain dict). When ``out_dir`` is given,
    checkpoints are written under ``out_dir/checkpoints`` and the bundle plus
    report files under ``out_dir``.
    """
    chash = config_hash(cfg)
    sweep_values = list(cfg.sweep.values) if cfg.sweep is not None else [None]
    seeds = [cfg.ensemble.base_seed + i for i in range(cfg.ensemble.n_seeds)]
    bundle = {
        "provenance": {
            "config_hash": chash,
            "code_version": __version__,
            "base_seed": cfg.ensemble.base_seed,
            "n_seeds": cfg.ensemble.n_seeds,
            "seeds": seeds,
        },
        "config": _cfg_doc(cfg),
        "sweep": {
            "path": cfg.sweep.path if cfg.sweep else None,
            "values": sweep_values if cfg.sweep else [],
        },
        "runs": {},
    }

    for value in sweep_values:
        cfg_v = apply_sweep_value(cfg, value) if value is not None else cfg
        key = _value_key(value)
        ckpt_dir = Path(out_dir) / "checkpoints" / key if out_dir else None
        log.info("sweep value %s: training %d seeds", key, len(seeds))
        results = _train_ensemble(cfg_v, seeds, ckpt_dir, chash, jobs)
        run = {
            "train": {
                str(seed): {
                    "converged": rep.converged,
                    "epochs_run": rep.epochs_run,
                    "final_loss": rep.loss_curve[-1] if rep.loss_curve else None,
                    "loss_curve": list(rep.loss_curve),
                    "initial_ref": _relative_ref(rep.initial_params_ref, out_dir),
                    "final_ref": _relative_ref(rep.final_params_ref, out_dir),
                    "failure": rep.failure,
                }
                for seed, rep in results.items()
            }
        }
        nets = {seed: (rep.initial_params, rep.final_params, rep.converged)
                for seed, rep in results.items()}
        run["metrics"] = compute_metrics(cfg_v, nets, metrics=cfg.metrics)
        bundle["runs"][key] = run

    if out_dir is not None:
        emit_report(bundle, out_dir)
    return bundle


def _train_ensemble(cfg_v, seeds, ckpt_dir, chash, jobs):
    args = [(cfg_v.task, cfg_v.model, cfg_v.train, seed, ckpt_dir, chash) for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_train_one, args))
    else:
        reports = [_train_one(a) for a in args]
    return dict(zip(seeds, reports))


def _train_one(arg):
    task, model, train_cfg, seed, ckpt_dir, chash = arg
    ckpt = str(ckpt_dir) if ckpt_dir is not None else None
    return train(task, model, train_cfg, seed, checkpoint_dir=ckpt, config_hash=chash)


def _relative_ref(ref, out_dir):
    """Checkpoint refs are stored relative to the output dir so a results
    directory is relocatable and reruns are byte-identical."""
    if out_dir is None:
        return str(ref)
    return str(Path(ref).relative_to(Path(out_dir)))


def compute_metrics(cfg_v, nets, metrics):
    """Evaluate the requested metrics for one trained ensemble.

    ``nets`` maps seed -> (initial RnnParams, final RnnParams, converged).
    """
    out = {}
    if not metrics:
        return out
    seeds = sorted(nets)
    labels = [f"net{seed}" for seed in seeds]
    mc = cfg_v.metrics_cfg
    base_seed = cfg_v.ensemble.base_seed
    eval_seed = derive_seed(STREAM_EVAL, base_seed)

    trajs = None
    if {"dsa", "svcca", "mds"} & set(metrics):
        eval_batch = generate(cfg_v.task, eval_seed, mc.eval_batch)
        trajs = {s: forward(nets[s][1], eval_batch.inputs)[1] for s in seeds}

    converged = {s: nets[s][2] for s in seeds}
    conv_idx = [i for i, s in enumerate(seeds) if converged[s]]

    if "dsa" in metrics:
        res = pairwise_dsa([trajs[s] for s in seeds], mc.dsa, labels=labels)
        out["dsa"] = {
            "matrix": res.matrix.D.tolist(),
            "labels": labels,
            "mean": res.degeneracy,
            "mean_converged": _converged_mean(res.matrix.D, conv_idx),
            "shared_lag": res.shared_lag,
            "retained_dim": res.retained_dim,
        }

    if "pif" in metrics:
        D = np.zeros((len(seeds), len(seeds)))
        for i in range(len(seeds)):
            for j in range(i + 1, len(seeds)):
                D[i, j] = D[j, i] = pif_distance(
                    nets[seeds[i]][1].W_h,
                    nets[seeds[j]][1].W_h,
                    normalize=mc.pif_normalize,
                    restarts=mc.pif_restarts,
                )
        out["pif"] = {
            "matrix": D.tolist(),
            "labels": labels,
            "normalized": mc.pif_normalize,
            "mean": mean_offdiagonal(D),
            "mean_converged": _converged_mean(D, conv_idx),
        }

    if "svcca" in metrics:
        D = np.zeros((len(seeds), len(seeds)))
        for i in range(len(seeds)):
            for j in range(i + 1, len(seeds)):
                D[i, j] = D[j, i] = svcca_distance(
                    trajs[seeds[i]], trajs[seeds[j]], mc.svcca_var_threshold
                )
        out["svcca"] = {
            "matrix": D.tolist(),
            "labels": labels,
            "mean": mean_offdiagonal(D),
            "mean_converged": _converged_mean(D, conv_idx),
        }

    if "behavior" in metrics:
        spec_ood = make_ood_variant(cfg_v.task)
        ood_seed = derive_seed(STREAM_OOD, base_seed)
        results = [
            ood_eval(nets[s][1], spec_ood, ood_seed, mc.eval_batch,
                     converged=converged[s], network_id=f"net{s}")
            for s in seeds
        ]
        entry = {
            "ood_mode": spec_ood.ood_mode.value,
            "ood_losses": {str(s): r.ood_loss for s, r in zip(seeds, results)},
            "converged": {str(s): bool(converged[s]) for s in seeds},
        }
        try:
            sigma, mean = behavioral_degeneracy(results)
            entry["sigma_ood"] = sigma
            entry["mean_ood"] = mean
        except InsufficientData as exc:
            entry["sigma_ood"] = None
            entry["mean_ood"] = None
            entry["note"] = str(exc)
        out["behavior"] = entry

    if "feature_learning" in metrics:
        probe_seed = derive_seed(STREAM_NTK, base_seed)
        probe_batch = generate(cfg_v.task, probe_seed, mc.ntk_probe_batch)
        wcn, ka, ra = {}, {}, {}
        for s in seeds:
            init_p, final_p, _ = nets[s]
            wcn[str(s)] = weight_change_norm(final_p.W_h, init_p.W_h, normalize=True)
            k0 = empirical_ntk(init_p, probe_batch, probe_id="fl")
            kf = empirical_ntk(final_p, probe_batch, probe_id="fl")
            ka[str(s)] = kernel_alignment(kf, k0)
            h0 = forward(init_p, probe_batch.inputs)[1]
            hT = forward(final_p, probe_batch.inputs)[1]
            ra[str(s)] = representation_alignment(hT, h0)
        out["feature_learning"] = {
            "weight_change_norm": wcn,
            "kernel_alignment": ka,
            "representation_alignment": ra,
            "mean_weight_change_norm": float(np.mean(list(wcn.values()))),
            "mean_kernel_alignment": float(np.mean(list(ka.values()))),
            "mean_representation_alignment": float(np.mean(list(ra.values()))),
        }

    if "probe" in metrics:
        pcfg = mc.probe if mc.probe is not None else default_probe_config(cfg_v.task.kind)
        h_star, curve = estimate_memory_demand(
            cfg_v.task, pcfg, derive_seed(STREAM_PROBE, base_seed)
        )
        out["probe"] = {"h_star": h_star, "curve": {str(h): v for h, v in curve.items()}}

    if "mds" in metrics:
        D = np.array(out["dsa"]["matrix"])
        out["mds"] = mds_embed(DistanceMatrix(D, "dsa"), mc.mds_dim).tolist()

    return out


def _converged_mean(D, conv_idx):
    if len(conv_idx) < 2:
        return None
    sub = D[np.ix_(conv_idx, conv_idx)]
    return mean_offdiagonal(sub)


def analyze_checkpoints(cfg, out_dir, metrics, jobs=1):
    """Recompute metrics from checkpoints persisted by ``train``/``sweep``.

    Reads converged flags (and the sweep layout) from ``out_dir/bundle.json``.
    """
    out_dir = Path(out_dir)
    bundle_path = out_dir / "bundle.json"
    if not bundle_path.exists():
        raise FileNotFoundError(f"no bundle.json in {out_dir}; run train/sweep first")
    bundle = json.loads(bundle_path.read_text())
    sweep_values = bundle["sweep"]["values"] or [None]
    for value in sweep_values:
        key = _value_key(value)
        cfg_v = apply_sweep_value(cfg, value) if value is not None else cfg
        run = bundle["runs"][key]
        nets = {}
        for seed_str, info in run["train"].items():
            init_p = load_checkpoint(out_dir / info["initial_ref"])
            final_p = load_checkpoint(out_dir / info["final_ref"])
            nets[int(seed_str)] = (init_p, final_p, info["converged"])
        run["metrics"] = compute_metrics(cfg_v, nets, metrics)
    emit_report(bundle, out_dir)
    return bundle


def _value_key(value):
    if value is None:
        return "base"
    if isinstance(value, float) and value == int(value):
        return str(int(value))
    return str(value)


def _cfg_doc(cfg):
    from .config import config_to_dict

    return config_to_dict(cfg)


# ---------------------------------------------------------------------------
# Report files


def emit_report(bundle, out_dir):
    """Write summary.json, bundle.json, and the CSV views of a bundle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    (out_dir / "bundle.json").write_text(_dumps(bundle))
    (out_dir / "summary.json").write_text(_dumps(_summarize(bundle)))

    with open(out_dir / "loss_curves.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sweep_value", "seed", "epoch", "loss"])
        for key in sorted(bundle["runs"]):
            for seed in sorted(bundle["runs"][key]["train"], key=int):
                for epoch, loss in enumerate(bundle["runs"][key]["train"][seed]["loss_curve"]):
                    w.writerow([key, seed, epoch, repr(loss)])

    with open(out_dir / "ood_losses.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sweep_value", "seed", "ood_loss", "converged"])
        for key in sorted(bundle["runs"]):
            behavior = bundle["runs"][key].get("metrics", {}).get("behavior")
            if not behavior:
                continue
            for seed in sorted(behavior["ood_losses"], key=int):
                w.writerow([
                    key, seed, repr(behavior["ood_losses"][seed]),
                    behavior["converged"][seed],
                ])

    for key in sorted(bundle["runs"]):
        mets = bundle["runs"][key].get("metrics", {})
        for name in ("dsa", "pif", "svcca"):
            if name in mets:
                _write_matrix_csv(
                    out_dir / f"D_{name}_{key}.csv", mets[name]["matrix"], mets[name]["labels"]
                )
        if "mds" in mets:
            with open(out_dir / f"mds_{key}.csv", "w", newline="") as f:
                w = csv.writer(f)
                dim = len(mets["mds"][0]) if mets["mds"] else 0
                w.writerow(["network"] + [f"coord{i}" for i in range(dim)])
                for label, row in zip(mets["dsa"]["labels"], mets["mds"]):
                    w.writerow([label] + [repr(x) for x in row])
        if "probe" in mets:
            with open(out_dir / f"probe_curve_{key}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["h", "mse"])
                for h in sorted(mets["probe"]["curve"], key=int):
                    w.writerow([h, repr(mets["probe"]["curve"][h])])


def _write_matrix_csv(path, matrix, labels):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([""] + list(labels))
        for label, row in zip(labels, matrix):
            w.writerow([label] + [repr(x) for x in row])


def _summarize(bundle):
    """Scalars-only view of a bundle (drops matrices and curves)."""
    summary = {"provenance": bundle["provenance"], "sweep": bundle["sweep"], "runs": {}}
    for key, run in bundle["runs"].items():
        entry = {
            "converged": {s: info["converged"] for s, info in run["train"].items()},
            "epochs_run": {s: info["epochs_run"] for s, info in run["train"].items()},
            "final_loss": {s: info["final_loss"] for s, info in run["train"].items()},
        }
        mets = run.get("metrics", {})
        scalars = {}
        for name in ("dsa", "pif", "svcca"):
            if name in mets:
                scalars[f"{name}_mean"] = mets[name]["mean"]
                scalars[f"{name}_mean_converged"] = mets[name]["mean_converged"]
        if "behavior" in mets:
            scalars["sigma_ood"] = mets["behavior"]["sigma_ood"]
            scalars["mean_ood"] = mets["behavior"]["mean_ood"]
        if "feature_learning" in mets:
            fl = mets["feature_learning"]
            scalars["mean_weight_change_norm"] = fl["mean_weight_change_norm"]
            scalars["mean_kernel_alignment"] = fl["mean_kernel_alignment"]
            scalars["mean_representation_alignment"] = fl["mean_representation_alignment"]
        if "probe" in mets:
            scalars["memory_demand"] = mets["probe"]["h_star"]
        entry["scalars"] = scalars
        summary["runs"][key] = entry
    return summary


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
