"""Experiment configuration: schema, per-task defaults, (de)serialization.

Configs are YAML/JSON documents with sections ``task``, ``model``, ``train``,
``ensemble``, ``sweep``, ``metrics`` and ``metrics_cfg``. Only ``task.kind``
is required; everything else defaults to the per-task tables below. Unknown
keys are rejected with the dotted path of the offender.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from .dynamics import DsaConfig
from .exceptions import ConfigError
from .probes import ProbeConfig
from .rnn import Parameterization, ParamMode
from .tasks import (
    DelayedDiscriminationParams,
    NbffParams,
    OodMode,
    PathIntegrationParams,
    SineWaveParams,
    TaskKind,
    TaskSpec,
)
from .training import CosineRestarts, ReduceOnPlateau, Regularizer, TrainConfig

METRIC_NAMES = ("dsa", "pif", "svcca", "behavior", "feature_learning", "probe", "mds")
_DEGENERACY_METRICS = {"dsa", "pif", "svcca", "behavior", "mds"}

# per-task training defaults
_TRAIN_DEFAULTS = {
    TaskKind.NBFF: dict(
        lr0=0.001, scheduler=None, max_epochs=300, steps_per_epoch=128,
        batch=256, early_stop_threshold=0.001, patience=3,
    ),
    TaskKind.DELAYED_DISCRIMINATION: dict(
        lr0=0.001, scheduler=CosineRestarts(), max_epochs=500, steps_per_epoch=128,
        batch=256, early_stop_threshold=0.01, patience=3,
    ),
    TaskKind.SINE_WAVE: dict(
        lr0=0.0005, scheduler=None, max_epochs=500, steps_per_epoch=128,
        batch=32, early_stop_threshold=0.05, patience=3,
    ),
    TaskKind.PATH_INTEGRATION: dict(
        lr0=0.001, scheduler=ReduceOnPlateau(factor=0.5, patience=40),
        max_epochs=1000, steps_per_epoch=128, batch=64,
        early_stop_threshold=0.05, patience=3,
    ),
}

# per-task leaky-integrator time constants for the mup parameterization
_TAU_DEFAULTS = {
    TaskKind.NBFF: 1.0,
    TaskKind.DELAYED_DISCRIMINATION: 0.1,
    TaskKind.SINE_WAVE: 1.0,
    TaskKind.PATH_INTEGRATION: 0.1,
}

# Per-task probe defaults. The candidate grids bracket each task's expected
# demand; widths/budgets are tuned so the error curve flattens once the
# window covers the task's true span: a lean probe for tasks whose plateau
# is approximation-limited (extra history features otherwise keep nudging
# the fit down), a rich and longer-trained probe for path integration where
# the one-step map (speed x heading -> displacement, wall contact) is
# nonlinear and must actually be learned.
_PROBE_DEFAULTS = {
    TaskKind.NBFF: dict(
        h_range=(1, 2, 3, 4, 5), hidden_units=24, epochs=60, n_inits=3,
        n_trials=150,
    ),
    TaskKind.DELAYED_DISCRIMINATION: dict(
        h_range=(1, 5, 10, 15, 20, 22, 24, 25, 26, 28, 30), hidden_units=32,
        epochs=120, n_inits=4, n_trials=400,
    ),
    TaskKind.SINE_WAVE: dict(
        h_range=(1, 2, 3, 4), hidden_units=24, epochs=300, n_inits=3,
        n_trials=100,
    ),
    TaskKind.PATH_INTEGRATION: dict(
        h_range=(1, 2, 3, 4, 5), hidden_units=64, epochs=400, n_inits=3,
        n_trials=200,
    ),
}

_PARAM_FIELDS = {
    TaskKind.NBFF: NbffParams,
    TaskKind.DELAYED_DISCRIMINATION: DelayedDiscriminationParams,
    TaskKind.SINE_WAVE: SineWaveParams,
    TaskKind.PATH_INTEGRATION: PathIntegrationParams,
}


@dataclass(frozen=True)
class EnsembleConfig:
    n_seeds: int = 2
    base_seed: int = 0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")


@dataclass(frozen=True)
class SweepAxis:
    path: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 1:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")


@dataclass(frozen=True)
class MetricsConfig:
    eval_batch: int = 64
    mds_dim: int = 2
    pif_restarts: int = 32
    pif_normalize: bool = True
    svcca_var_threshold: float = 0.99
    ntk_probe_batch: int = 64
    dsa: DsaConfig = field(default_factory=DsaConfig)
    probe: ProbeConfig = None

    def __post_init__(self):
        if self.eval_batch < 2 or self.ntk_probe_batch < 1:
            raise ValueError("eval_batch must be >= 2 and ntk_probe_batch >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSpec
    model: Parameterization
    train: TrainConfig
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    sweep: SweepAxis = None
    metrics: tuple = ()
    metrics_cfg: MetricsConfig = field(default_factory=MetricsConfig)


def default_train_config(kind, **overrides):
    base = dict(_TRAIN_DEFAULTS[TaskKind(kind)])
    base.update(overrides)
    return TrainConfig(**base)


def default_probe_config(kind, **overrides):
    base = dict(_PROBE_DEFAULTS[TaskKind(kind)])
    base.update(overrides)
    return ProbeConfig(**base)


def default_tau(kind):
    return _TAU_DEFAULTS[TaskKind(kind)]


# ---------------------------------------------------------------------------
# Parsing


_MISSING = object()


def parse_config(text):
    """Parse and validate a YAML/JSON experiment config."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    return config_from_dict(doc)


def config_from_dict(doc):
    doc = dict(doc)
    task = _parse_task(_pop_section(doc, "task", required=True))
    model = _parse_model(_pop_section(doc, "model"), task.kind)
    train = _parse_train(_pop_section(doc, "train"), task.kind)
    ensemble = _parse_ensemble(_pop_section(doc, "ensemble"))
    sweep = _parse_sweep(doc.pop("sweep", None))
    metrics = _parse_metrics(doc.pop("metrics", []))
    metrics_cfg = _parse_metrics_cfg(_pop_section(doc, "metrics_cfg"), task.kind)
    _reject_unknown(doc, "", ())
    cfg = ExperimentConfig(task, model, train, ensemble, sweep, metrics, metrics_cfg)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if set(cfg.metrics) & _DEGENERACY_METRICS and cfg.ensemble.n_seeds < 2:
        raise ConfigError("degeneracy metrics need n_seeds >= 2", "ensemble.n_seeds")
    if "mds" in cfg.metrics and "dsa" not in cfg.metrics:
        raise ConfigError("mds embeds the dsa distance matrix; add dsa", "metrics")
    if cfg.sweep is not None:
        try:
            for v in cfg.sweep.values:
                apply_sweep_value(cfg, v)
        except (ValueError, AttributeError, TypeError) as exc:
            raise ConfigError(f"sweep axis invalid: {exc}", "sweep") from exc


def _pop_section(doc, name, required=False):
    sec = doc.pop(name, _MISSING)
    if sec is _MISSING or sec is None:
        if required:
            raise ConfigError("section is required", name)
        return {}
    if not isinstance(sec, dict):
        raise ConfigError("section must be a mapping", name)
    return dict(sec)


def _reject_unknown(d, path, allowed):
    for key in d:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError("unknown key", where)


def _take(d, key, path, default=_MISSING, kind=None):
    val = d.pop(key, _MISSING)
    if val is _MISSING or val is None:
        if default is _MISSING:
            raise ConfigError("missing required key", f"{path}.{key}")
        return default
    if kind is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"expected a boolean, got {val!r}", f"{path}.{key}")
        return val
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"expected an integer, got {val!r}", f"{path}.{key}")
        return val
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(f"expected a finite number, got {val!r}", f"{path}.{key}")
        return float(val)
    if kind is str:
        if not isinstance(val, str):
            raise ConfigError(f"expected a string, got {val!r}", f"{path}.{key}")
        return val
    return val


def _parse_task(sec):
    kind_name = _take(sec, "kind", "task", kind=str)
    try:
        kind = TaskKind(kind_name)
    except ValueError:
        raise ConfigError(
            f"unknown task kind {kind_name!r}; expected one of "
            f"{[k.value for k in TaskKind]}", "task.kind"
        ) from None
    channels = _take(sec, "channels", "task", default=1, kind=int)
    trial_len = _take(sec, "trial_len", "task", default=0, kind=int)
    ood_raw = _take(sec, "ood_mode", "task", default=OodMode.NONE.value, kind=str)
    try:
        ood = OodMode(ood_raw)
    except ValueError:
        raise ConfigError(f"unknown ood_mode {ood_raw!r}", "task.ood_mode") from None
    params_sec = sec.pop("params", {}) or {}
    if not isinstance(params_sec, dict):
        raise ConfigError("must be a mapping", "task.params")
    _reject_unknown(sec, "task", ())
    param_cls = _PARAM_FIELDS[kind]
    allowed = {f.name for f in dataclasses.fields(param_cls)}
    _reject_unknown(dict(params_sec), "task.params", allowed)
    try:
        params = param_cls(**params_sec)
        return TaskSpec(kind, channels, trial_len, params, ood)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "task") from None


def _parse_model(sec, kind):
    width = _take(sec, "width", "model", default=128, kind=int)
    mode_raw = _take(sec, "mode", "model", default=ParamMode.STANDARD.value, kind=str)
    try:
        mode = ParamMode(mode_raw)
    except ValueError:
        raise ConfigError(f"unknown mode {mode_raw!r}", "model.mode") from None
    gamma = _take(sec, "gamma", "model", default=1.0, kind=float)
    tau = _take(sec, "tau", "model", default=default_tau(kind), kind=float)
    _reject_unknown(sec, "model", ())
    try:
        return Parameterization(width=width, mode=mode, gamma=gamma, tau=tau)
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from None


def _parse_scheduler(raw, path):
    if raw is None or raw == "none":
        return None
    if not isinstance(raw, dict):
        raise ConfigError("scheduler must be 'none' or a mapping with a kind", path)
    raw = dict(raw)
    kind = _take(raw, "kind", path, kind=str)
    if kind == "cosine_restarts":
        period = _take(raw, "period", path, default=50, kind=int)
        min_lr = _take(raw, "min_lr", path, default=0.0, kind=float)
        _reject_unknown(raw, path, ())
        return CosineRestarts(period=period, min_lr=min_lr)
    if kind == "reduce_on_plateau":
        factor = _take(raw, "factor", path, default=0.5, kind=float)
        patience = _take(raw, "patience", path, default=40, kind=int)
        _reject_unknown(raw, path, ())
        return ReduceOnPlateau(factor=factor, patience=patience)
    raise ConfigError(f"unknown scheduler kind {kind!r}", path)


def _parse_train(sec, kind):
    defaults = _TRAIN_DEFAULTS[kind]
    reg_sec = sec.pop("reg", {}) or {}
    if not isinstance(reg_sec, dict):
        raise ConfigError("must be a mapping", "train.reg")
    reg_sec = dict(reg_sec)
    lam_rank = _take(reg_sec, "lambda_rank", "train.reg", default=0.0, kind=float)
    lam_l1 = _take(reg_sec, "lambda_l1", "train.reg", default=0.0, kind=float)
    _reject_unknown(reg_sec, "train.reg", ())

    sched_raw = sec.pop("scheduler", _MISSING)
    if sched_raw is _MISSING:
        scheduler = defaults["scheduler"]
    else:
        scheduler = _parse_scheduler(sched_raw, "train.scheduler")

    kwargs = dict(
        lr0=_take(sec, "lr0", "train", default=defaults["lr0"], kind=float),
        max_epochs=_take(sec, "max_epochs", "train", default=defaults["max_epochs"], kind=int),
        steps_per_epoch=_take(
            sec, "steps_per_epoch", "train", default=defaults["steps_per_epoch"], kind=int
        ),
        batch=_take(sec, "batch", "train", default=defaults["batch"], kind=int),
        early_stop_threshold=_take(
            sec, "early_stop_threshold", "train",
            default=defaults["early_stop_threshold"], kind=float,
        ),
        patience=_take(sec, "patience", "train", default=defaults["patience"], kind=int),
        grad_clip=_take(sec, "grad_clip", "train", default=None),
        scheduler=scheduler,
    )
    _reject_unknown(sec, "train", ())
    if kwargs["grad_clip"] is not None and not isinstance(kwargs["grad_clip"], (int, float)):
        raise ConfigError("grad_clip must be a number or null", "train.grad_clip")
    try:
        return TrainConfig(reg=Regularizer(lam_rank, lam_l1), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "train") from None


def _parse_ensemble(sec):
    n_seeds = _take(sec, "n_seeds", "ensemble", default=2, kind=int)
    base_seed = _take(sec, "base_seed", "ensemble", default=0, kind=int)
    _reject_unknown(sec, "ensemble", ())
    try:
        return EnsembleConfig(n_seeds, base_seed)
    except ValueError as exc:
        raise ConfigError(str(exc), "ensemble") from None


def _parse_sweep(raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("sweep must be a mapping", "sweep")
    raw = dict(raw)
    path = _take(raw, "path", "sweep", kind=str)
    values = _take(raw, "values", "sweep")
    if not isinstance(values, (list, tuple)):
        raise ConfigError("values must be a list", "sweep.values")
    _reject_unknown(raw, "sweep", ())
    try:
        return SweepAxis(path, tuple(values))
    except ValueError as exc:
        raise ConfigError(str(exc), "sweep") from None


def _parse_metrics(raw):
    if raw is None:
        return ()
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, (list, tuple)):
        raise ConfigError("metrics must be a list of names", "metrics")
    seen = []
    for name in raw:
        if name not in METRIC_NAMES:
            raise ConfigError(
                f"unknown metric {name!r}; expected subset of {list(METRIC_NAMES)}",
                "metrics",
            )
        if name in seen:
            raise ConfigError(f"duplicate metric {name!r}", "metrics")
        seen.append(name)
    return tuple(seen)


def _parse_metrics_cfg(sec, kind):
    dsa_sec = sec.pop("dsa", {}) or {}
    if not isinstance(dsa_sec, dict):
        raise ConfigError("must be a mapping", "metrics_cfg.dsa")
    dsa_sec = dict(dsa_sec)
    dsa_kwargs = {}
    for name, typ in (
        ("pca_var_threshold", float), ("lag_min", int), ("lag_max", int),
        ("procrustes_restarts", int), ("procrustes_tol", float),
        ("procrustes_max_iters", int),
    ):
        val = dsa_sec.pop(name, None)
        if val is not None:
            try:
                dsa_kwargs[name] = typ(val)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value {val!r}", f"metrics_cfg.dsa.{name}") from None
    _reject_unknown(dsa_sec, "metrics_cfg.dsa", ())

    probe_sec = sec.pop("probe", None)
    probe = None
    if probe_sec is not None:
        if not isinstance(probe_sec, dict):
            raise ConfigError("must be a mapping", "metrics_cfg.probe")
        probe_sec = dict(probe_sec)
        probe_kwargs = {}
        for name, typ in (
            ("h_range", tuple), ("hidden_units", int), ("epochs", int),
            ("n_inits", int), ("train_frac", float), ("n_trials", int),
            ("lr", float), ("batch_size", int), ("plateau_rho", float),
        ):
            val = probe_sec.pop(name, None)
            if val is not None:
                try:
                    probe_kwargs[name] = typ(val)
                except (TypeError, ValueError):
                    raise ConfigError(f"bad value {val!r}", f"metrics_cfg.probe.{name}") from None
        _reject_unknown(probe_sec, "metrics_cfg.probe", ())
        try:
            probe = default_probe_config(kind, **probe_kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc), "metrics_cfg.probe") from None

    kwargs = dict(
        eval_batch=_take(sec, "eval_batch", "metrics_cfg", default=64, kind=int),
        mds_dim=_take(sec, "mds_dim", "metrics_cfg", default=2, kind=int),
        pif_restarts=_take(sec, "pif_restarts", "metrics_cfg", default=32, kind=int),
        pif_normalize=_take(sec, "pif_normalize", "metrics_cfg", default=True, kind=bool),
        svcca_var_threshold=_take(
            sec, "svcca_var_threshold", "metrics_cfg", default=0.99, kind=float
        ),
        ntk_probe_batch=_take(sec, "ntk_probe_batch", "metrics_cfg", default=64, kind=int),
    )
    _reject_unknown(sec, "metrics_cfg", ())
    try:
        return MetricsConfig(dsa=DsaConfig(**dsa_kwargs), probe=probe, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc), "metrics_cfg") from None


# ---------------------------------------------------------------------------
# Serialization


def config_to_dict(cfg):
    """Canonical plain-dict form; parse(serialize(cfg)) round-trips."""
    task = {
        "kind": cfg.task.kind.value,
        "channels": cfg.task.channels,
        "trial_len": cfg.task.trial_len,
        "ood_mode": cfg.task.ood_mode.value,
        "params": dataclasses.asdict(cfg.task.params),
    }
    model = {
        "width": cfg.model.width,
        "mode": cfg.model.mode.value,
        "gamma": cfg.model.gamma,
        "tau": cfg.model.tau,
    }
    sched = cfg.train.scheduler
    if sched is None:
        sched_doc = "none"
    elif isinstance(sched, CosineRestarts):
        sched_doc = {"kind": "cosine_restarts", "period": sched.period, "min_lr": sched.min_lr}
    else:
        sched_doc = {"kind": "reduce_on_plateau", "factor": sched.factor, "patience": sched.patience}
    train = {
        "lr0": cfg.train.lr0,
        "scheduler": sched_doc,
        "max_epochs": cfg.train.max_epochs,
        "steps_per_epoch": cfg.train.steps_per_epoch,
        "batch": cfg.train.batch,
        "early_stop_threshold": cfg.train.early_stop_threshold,
        "patience": cfg.train.patience,
        "reg": {"lambda_rank": cfg.train.reg.lambda_rank, "lambda_l1": cfg.train.reg.lambda_l1},
        "grad_clip": cfg.train.grad_clip,
    }
    doc = {
        "task": task,
        "model": model,
        "train": train,
        "ensemble": {"n_seeds": cfg.ensemble.n_seeds, "base_seed": cfg.ensemble.base_seed},
        "metrics": list(cfg.metrics),
        "metrics_cfg": {
            "eval_batch": cfg.metrics_cfg.eval_batch,
            "mds_dim": cfg.metrics_cfg.mds_dim,
            "pif_restarts": cfg.metrics_cfg.pif_restarts,
            "pif_normalize": cfg.metrics_cfg.pif_normalize,
            "svcca_var_threshold": cfg.metrics_cfg.svcca_var_threshold,
            "ntk_probe_batch": cfg.metrics_cfg.ntk_probe_batch,
            "dsa": dataclasses.asdict(cfg.metrics_cfg.dsa),
        },
    }
    if cfg.metrics_cfg.probe is not None:
        probe = dataclasses.asdict(cfg.metrics_cfg.probe)
        probe["h_range"] = list(probe["h_range"])
        doc["metrics_cfg"]["probe"] = probe
    if cfg.sweep is not None:
        doc["sweep"] = {"path": cfg.sweep.path, "values": list(cfg.sweep.values)}
    return doc


def serialize_config(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def config_hash(cfg):
    payload = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def apply_sweep_value(cfg, value):
    """Return a copy of ``cfg`` with the sweep axis set to ``value``."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep axis")
    return _replace_path(cfg, cfg.sweep.path.split("."), value)


def _replace_path(obj, parts, value):
    if not dataclasses.is_dataclass(obj):
        raise AttributeError(f"cannot descend into {type(obj).__name__}")
    name = parts[0]
    if not hasattr(obj, name):
        raise AttributeError(f"{type(obj).__name__} has no field {name!r}")
    if len(parts) == 1:
        return dataclasses.replace(obj, **{name: value})
    child = _replace_path(getattr(obj, name), parts[1:], value)
    return dataclasses.replace(obj, **{name: child})
