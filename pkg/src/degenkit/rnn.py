"""Forward dynamics for vanilla discrete-time RNNs.

Two parameterizations are supported:

* ``standard``: ``h_t = tanh(W_h h_{t-1} + W_x x_t + b)`` with readout
  ``y_t = W_out h_t + b_out`` and uniform ``U(-1/sqrt(n), 1/sqrt(n))`` init.
* ``mup``: a width-aware leaky integrator
  ``h_t = h_{t-1} + tau * (-h_{t-1} + (1/n) W_h tanh(h_{t-1}) + W_x x_t + b)``
  with readout ``y_t = (1/(gamma*n)) W_out tanh(h_t) + b_out``. The recurrent
  matrix is initialized N(0, n) entrywise (the 1/n premultiplier lives in the
  update rule), and the effective Adam learning rate scales as gamma * lr0.
  ``gamma`` tunes feature-learning strength: larger gamma gives richer
  training, smaller gamma is lazier.

All state is float64. ``forward`` is pure and records the full hidden
trajectory; the initial hidden state is zero in both modes.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import NumericFailure
from .rng import STREAM_INIT, make_rng


class ParamMode(str, Enum):
    STANDARD = "standard"
    MUP = "mup"


@dataclass(frozen=True)
class Parameterization:
    width: int
    mode: ParamMode = ParamMode.STANDARD
    gamma: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ParamMode(self.mode))
        if self.width < 1:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")


@dataclass
class RnnParams:
    """Weights of one network plus its parameterization tag."""

    W_h: np.ndarray
    W_x: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    param_mode: Parameterization

    def __post_init__(self):
        n, m, p = self.n, self.m, self.p
        if self.W_h.shape != (n, n):
            raise ValueError(f"W_h must be square, got {self.W_h.shape}")
        if self.W_x.shape != (n, m) or self.b.shape != (n,):
            raise ValueError("W_x/b dimensions inconsistent with W_h")
        if self.W_out.shape != (p, n) or self.b_out.shape != (p,):
            raise ValueError("readout dimensions inconsistent with W_h")
        if self.param_mode.width != n:
            raise ValueError(
                f"parameterization width {self.param_mode.width} != W_h size {n}"
            )
        for name in ("W_h", "W_x", "b", "W_out", "b_out"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n(self):
        return self.W_h.shape[0]

    @property
    def m(self):
        return self.W_x.shape[1]

    @property
    def p(self):
        return self.W_out.shape[0]

    def as_dict(self):
        return {
            "W_h": self.W_h,
            "W_x": self.W_x,
            "b": self.b,
            "W_out": self.W_out,
            "b_out": self.b_out,
        }

    def with_arrays(self, arrays):
        return RnnParams(
            W_h=arrays["W_h"],
            W_x=arrays["W_x"],
            b=arrays["b"],
            W_out=arrays["W_out"],
            b_out=arrays["b_out"],
            param_mode=self.param_mode,
        )

    def copy(self):
        return self.with_arrays({k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class HiddenTrajectory:
    """Hidden-state record, shaped (trials, time, units)."""

    values: np.ndarray

    def flatten(self):
        trials, time, units = self.values.shape
        return self.values.reshape(trials * time, units)


def init_params(n, m, p, mode, seed):
    """Draw parameters for a fresh network, deterministically per seed."""
    if min(n, m, p) < 1:
        raise ValueError(f"dimensions must be positive, got n={n}, m={m}, p={p}")
    if mode.width != n:
        raise ValueError(f"parameterization width {mode.width} != n={n}")
    rng = make_rng(STREAM_INIT, seed)
    bound = 1.0 / np.sqrt(n)
    if mode.mode is ParamMode.STANDARD:
        W_h = rng.uniform(-bound, bound, size=(n, n))
        W_x = rng.uniform(-bound, bound, size=(n, m))
        b = rng.uniform(-bound, bound, size=n)
        W_out = rng.uniform(-bound, bound, size=(p, n))
        b_out = rng.uniform(-bound, bound, size=p)
    else:
        W_h = rng.normal(0.0, np.sqrt(n), size=(n, n))
        W_x = rng.uniform(-bound, bound, size=(n, m))
        b = np.zeros(n)
        W_out = rng.uniform(-bound, bound, size=(p, n))
        b_out = np.zeros(p)
    return RnnParams(W_h, W_x, b, W_out, b_out, mode)


def forward(params, inputs, activation=np.tanh):
    """Run the network over an input batch.

    Parameters
    ----------
    params : RnnParams
    inputs : array (batch, time, m)
    activation : callable, default tanh. Test hook only; training assumes
        tanh.

    Returns
    -------
    (outputs, HiddenTrajectory) with outputs shaped (batch, time, p).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[2] != params.m:
        raise ValueError(
            f"inputs must be (batch, time, {params.m}), got {inputs.shape}"
        )
    B, T, _ = inputs.shape
    n = params.n
    H = np.empty((B, T, n))
    h = np.zeros((B, n))
    xproj = inputs @ params.W_x.T

    mode = params.param_mode
    if mode.mode is ParamMode.STANDARD:
        for t in range(T):
            h = activation(h @ params.W_h.T + xproj[:, t] + params.b)
            _check_finite(h, t)
            H[:, t] = h
        outputs = H @ params.W_out.T + params.b_out
    else:
        tau, n_f = mode.tau, float(n)
        for t in range(T):
            drive = activation(h) @ params.W_h.T / n_f + xproj[:, t] + params.b
            h = (1.0 - tau) * h + tau * drive
            _check_finite(h, t)
            H[:, t] = h
        scale = 1.0 / (mode.gamma * n_f)
        outputs = scale * (activation(H) @ params.W_out.T) + params.b_out
    return outputs, HiddenTrajectory(H)


def _check_finite(h, t):
    if not np.all(np.isfinite(h)):
        raise NumericFailure(f"non-finite hidden state at step {t}", step=t)
