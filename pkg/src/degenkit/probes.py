"""Task memory-demand estimation with a feedforward probe.

For each candidate history length h, every trial step becomes one labeled
row: the features hold the last h (input, target) pairs and the label is the
next-step target. A small two-layer MLP (tanh hidden layer, linear output)
is trained to predict the label; the held-out error curve MSE(h) flattens
once h covers the task's intrinsic memory span, and the smallest such h is
reported as the memory demand.

The probe consumes raw task trials, not network activations: it measures the
task itself.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .rng import STREAM_PROBE, make_rng
from .tasks import generate
from .training import adam_init, adam_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbeConfig:
    h_range: tuple
    hidden_units: int = 64
    epochs: int = 80
    n_inits: int = 3
    train_frac: float = 0.8
    n_trials: int = 300
    lr: float = 1e-3
    batch_size: int = 256
    plateau_rho: float = 0.05

    def __post_init__(self):
        hs = tuple(int(h) for h in self.h_range)
        if not hs or any(h < 1 for h in hs) or list(hs) != sorted(set(hs)):
            raise ValueError("h_range must be a nonempty ascending list of positive ints")
        object.__setattr__(self, "h_range", hs)
        if not 0 < self.train_frac < 1:
            raise ValueError("train_frac must lie in (0, 1)")
        if min(self.hidden_units, self.epochs, self.n_inits, self.n_trials) < 1:
            raise ValueError("hidden_units, epochs, n_inits, n_trials must be >= 1")


def build_history_dataset(spec, h, seed, n_trials):
    """Labeled rows (features, labels) for history length ``h``.

    Features concatenate the last h inputs and the last h targets (oldest
    first); the label is the target one step ahead. One trial of length T
    yields T - h rows.
    """
    if h < 1 or h >= spec.trial_len:
        raise ValueError(f"history length must satisfy 1 <= h < trial_len, got {h}")
    trials = generate(spec, seed, n_trials)
    x, y = trials.inputs, trials.targets
    T = spec.trial_len
    rows = T - h
    d_in, d_out = x.shape[2], y.shape[2]

    xh = np.empty((n_trials, rows, h, d_in))
    yh = np.empty((n_trials, rows, h, d_out))
    for j in range(h):
        xh[:, :, j] = x[:, j : j + rows]
        yh[:, :, j] = y[:, j : j + rows]
    features = np.concatenate(
        [xh.reshape(n_trials * rows, h * d_in), yh.reshape(n_trials * rows, h * d_out)],
        axis=1,
    )
    labels = y[:, h:T].reshape(n_trials * rows, d_out)
    return features, labels


def fit_mlp_probe(features, labels, cfg, seed):
    """Held-out MSE of the probe, averaged over ``cfg.n_inits`` restarts."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    rows = features.shape[0]
    if rows < 100:
        raise ValueError(f"need at least 100 rows, got {rows}")
    split_rng = make_rng(STREAM_PROBE, seed, 0)
    order = split_rng.permutation(rows)
    n_train = int(round(cfg.train_frac * rows))
    if n_train == 0 or n_train == rows:
        raise ValueError("degenerate train/test split")
    train_idx, test_idx = order[:n_train], order[n_train:]
    Xtr, Ytr = features[train_idx], labels[train_idx]
    Xte, Yte = features[test_idx], labels[test_idx]

    # standardize on the training split; reported MSE stays in label units
    x_mu, x_sd = Xtr.mean(axis=0), np.maximum(Xtr.std(axis=0), 1e-12)
    y_mu, y_sd = Ytr.mean(axis=0), np.maximum(Ytr.std(axis=0), 1e-12)
    Xtr = (Xtr - x_mu) / x_sd
    Xte = (Xte - x_mu) / x_sd
    Ytr_s = (Ytr - y_mu) / y_sd

    mses = []
    for init in range(cfg.n_inits):
        pred_s = _train_mlp(Xtr, Ytr_s, Xte, cfg, seed, init)
        pred = pred_s * y_sd + y_mu
        mses.append(float(np.mean((pred - Yte) ** 2)))
    return float(np.mean(mses))


def _train_mlp(Xtr, Ytr, Xte, cfg, seed, init):
    rng = make_rng(STREAM_PROBE, seed, 1, init)
    d_in, d_out, hidden = Xtr.shape[1], Ytr.shape[1], cfg.hidden_units
    params = {
        "W1": rng.uniform(-1, 1, (hidden, d_in)) / np.sqrt(d_in),
        "b1": np.zeros(hidden),
        "W2": rng.uniform(-1, 1, (d_out, hidden)) / np.sqrt(hidden),
        "b2": np.zeros(d_out),
    }
    state = adam_init(params)
    n = Xtr.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            grads = _mlp_grads(params, Xtr[idx], Ytr[idx])
            params, state = adam_step(state, params, grads, cfg.lr)
    return _mlp_forward(params, Xte)


def _mlp_forward(params, X):
    return np.tanh(X @ params["W1"].T + params["b1"]) @ params["W2"].T + params["b2"]


def _mlp_grads(params, X, Y):
    a = np.tanh(X @ params["W1"].T + params["b1"])
    pred = a @ params["W2"].T + params["b2"]
    g = (2.0 / Y.size) * (pred - Y)
    zbar = (g @ params["W2"]) * (1.0 - a * a)
    return {
        "W2": g.T @ a,
        "b2": g.sum(axis=0),
        "W1": zbar.T @ X,
        "b1": zbar.sum(axis=0),
    }


def estimate_memory_demand(spec, cfg, seed):
    """Memory demand h* and the full MSE(h) curve.

    h* is the smallest h whose error is within a factor (1 + plateau_rho) of
    the best error achievable at any h' >= h in the candidate grid.
    """
    log.info(
        "probing %s: h_range=%s hidden=%d epochs=%d inits=%d trials=%d",
        spec.kind.value, cfg.h_range, cfg.hidden_units, cfg.epochs, cfg.n_inits,
        cfg.n_trials,
    )
    curve = {}
    for h in cfg.h_range:
        features, labels = build_history_dataset(spec, h, seed, cfg.n_trials)
        curve[h] = fit_mlp_probe(features, labels, cfg, seed)
        log.info("  h=%d -> MSE %.6g", h, curve[h])
    h_star = cfg.h_range[-1]
    for h in cfg.h_range:
        tail_min = min(curve[hh] for hh in cfg.h_range if hh >= h)
        if curve[h] <= (1.0 + cfg.plateau_rho) * tail_min:
            h_star = h
            break
    return h_star, curve
