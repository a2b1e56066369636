"""Gradient training of RNNs: exact BPTT, Adam, schedulers, regularizers.

Gradients are computed by hand-written reverse-mode accumulation through the
unrolled recurrence (tanh nonlinearity assumed), for both parameterizations.
The optimizer operates on name->array dicts so the MLP probe can reuse it.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericFailure
from .rng import STREAM_BATCH, derive_seed
from .rnn import ParamMode, RnnParams, init_params
from .tasks import generate


def masked_mse(outputs, targets, mask):
    """Mean squared error over unmasked entries: sum(mask*(o-t)^2)/sum(mask)."""
    outputs, targets, mask = (np.asarray(a, dtype=np.float64) for a in (outputs, targets, mask))
    if outputs.shape != targets.shape or outputs.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: outputs {outputs.shape}, targets {targets.shape}, "
            f"mask {mask.shape}"
        )
    denom = mask.sum()
    if denom == 0:
        raise ValueError("loss mask is all-zero")
    diff = outputs - targets
    return float(np.sum(mask * diff * diff) / denom)


@dataclass(frozen=True)
class Regularizer:
    """Structural penalties applied to the recurrent weight matrix."""

    lambda_rank: float = 0.0
    lambda_l1: float = 0.0

    def __post_init__(self):
        if self.lambda_rank < 0 or self.lambda_l1 < 0:
            raise ValueError("penalty strengths must be nonnegative")

    @property
    def is_zero(self):
        return self.lambda_rank == 0.0 and self.lambda_l1 == 0.0


def nuclear_penalty(W, lambda_rank):
    """Nuclear-norm penalty ``lambda * sum_i sigma_i(W)`` and its subgradient.

    The subgradient is ``lambda * U V^T`` from a thin SVD, valid also at
    points with repeated singular values.
    """
    if lambda_rank < 0:
        raise ValueError("lambda_rank must be nonnegative")
    if lambda_rank == 0.0:
        return 0.0, np.zeros_like(W)
    try:
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD failed in nuclear penalty: {exc}") from exc
    return float(lambda_rank * s.sum()), lambda_rank * (U @ Vt)


def l1_penalty(W, lambda_l1):
    """Elementwise L1 penalty ``lambda * sum_i |w_i|``; subgradient sign(w),
    with sign(0) taken as 0."""
    if lambda_l1 < 0:
        raise ValueError("lambda_l1 must be nonnegative")
    if lambda_l1 == 0.0:
        return 0.0, np.zeros_like(W)
    return float(lambda_l1 * np.abs(W).sum()), lambda_l1 * np.sign(W)


def loss_and_grads(params, batch, reg=Regularizer()):
    """Task loss, penalty value, and exact gradients of their sum.

    Returns ``(task_loss, penalty_value, grads)`` where grads is a dict over
    the parameter fields of :class:`RnnParams`.
    """
    inputs = np.asarray(batch.inputs, dtype=np.float64)
    targets = np.asarray(batch.targets, dtype=np.float64)
    mask = np.asarray(batch.loss_mask, dtype=np.float64)
    B, T, _ = inputs.shape
    n = params.n
    msum = mask.sum()
    if msum == 0:
        raise ValueError("loss mask is all-zero")

    mode = params.param_mode
    if mode.mode is ParamMode.STANDARD:
        H = np.empty((B, T, n))
        h = np.zeros((B, n))
        xproj = inputs @ params.W_x.T
        for t in range(T):
            h = np.tanh(h @ params.W_h.T + xproj[:, t] + params.b)
            H[:, t] = h
        outputs = H @ params.W_out.T + params.b_out
        _check_grad_finite(outputs, "forward outputs")

        diff = outputs - targets
        task_loss = float(np.sum(mask * diff * diff) / msum)
        gy = (2.0 / msum) * mask * diff

        gW_out = np.einsum("btp,btn->pn", gy, H)
        gb_out = gy.sum(axis=(0, 1))
        gW_h = np.zeros((n, n))
        gW_x = np.zeros((n, params.m))
        gb = np.zeros(n)
        carry = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            hbar = gy[:, t] @ params.W_out + carry
            abar = hbar * (1.0 - H[:, t] ** 2)
            hprev = H[:, t - 1] if t > 0 else np.zeros((B, n))
            gW_h += abar.T @ hprev
            gW_x += abar.T @ inputs[:, t]
            gb += abar.sum(axis=0)
            carry = abar @ params.W_h
    else:
        tau, n_f = mode.tau, float(n)
        scale = 1.0 / (mode.gamma * n_f)
        H = np.empty((B, T, n))
        h = np.zeros((B, n))
        xproj = inputs @ params.W_x.T
        for t in range(T):
            drive = np.tanh(h) @ params.W_h.T / n_f + xproj[:, t] + params.b
            h = (1.0 - tau) * h + tau * drive
            H[:, t] = h
        Phi = np.tanh(H)
        outputs = scale * (Phi @ params.W_out.T) + params.b_out
        _check_grad_finite(outputs, "forward outputs")

        diff = outputs - targets
        task_loss = float(np.sum(mask * diff * diff) / msum)
        gy = (2.0 / msum) * mask * diff

        gW_out = scale * np.einsum("btp,btn->pn", gy, Phi)
        gb_out = gy.sum(axis=(0, 1))
        gW_h = np.zeros((n, n))
        gW_x = np.zeros((n, params.m))
        gb = np.zeros(n)
        dphi = 1.0 - Phi**2
        carry = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            hbar = dphi[:, t] * (scale * (gy[:, t] @ params.W_out) + (tau / n_f) * (carry @ params.W_h))
            hbar += (1.0 - tau) * carry
            phiprev = Phi[:, t - 1] if t > 0 else np.zeros((B, n))
            gW_h += (tau / n_f) * (hbar.T @ phiprev)
            gW_x += tau * (hbar.T @ inputs[:, t])
            gb += tau * hbar.sum(axis=0)
            carry = hbar

    penalty = 0.0
    if reg.lambda_rank > 0:
        val, sub = nuclear_penalty(params.W_h, reg.lambda_rank)
        penalty += val
        gW_h = gW_h + sub
    if reg.lambda_l1 > 0:
        val, sub = l1_penalty(params.W_h, reg.lambda_l1)
        penalty += val
        gW_h = gW_h + sub

    grads = {"W_h": gW_h, "W_x": gW_x, "b": gb, "W_out": gW_out, "b_out": gb_out}
    for name, g in grads.items():
        _check_grad_finite(g, f"gradient of {name}")
    return task_loss, penalty, grads


def bptt_grads(params, batch, reg=Regularizer()):
    """Exact gradients of masked MSE plus penalties w.r.t. every parameter."""
    _, _, grads = loss_and_grads(params, batch, reg)
    return grads


def _check_grad_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# Adam (no weight decay), over name -> array dicts


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params):
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(state, params, grads, lr):
    """One bias-corrected Adam update. Returns (new params, new state)."""
    for k in params:
        if state.m[k].shape != params[k].shape or grads[k].shape != params[k].shape:
            raise ValueError(f"optimizer state/gradient shape mismatch for {k}")
    t = state.step + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(new_m, new_v, t, b1, b2, eps)


def clip_gradients(grads, max_norm):
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


def mup_lr(gamma, lr0):
    """Width-stable learning-rate scaling for Adam: lr = gamma * lr0."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return gamma * lr0


# ---------------------------------------------------------------------------
# Learning-rate schedules


@dataclass(frozen=True)
class CosineRestarts:
    period: int = 50
    min_lr: float = 0.0

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("cosine period must be >= 1")


@dataclass(frozen=True)
class ReduceOnPlateau:
    factor: float = 0.5
    patience: int = 40

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("plateau factor must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("plateau patience must be >= 1")


def cosine_restarts_lr(lr0, sched, epoch):
    phase = (epoch % sched.period) / sched.period
    return sched.min_lr + (lr0 - sched.min_lr) * (1.0 + math.cos(math.pi * phase)) / 2.0


class LrScheduler:
    """Stateful per-epoch schedule runner.

    ``epoch_lr(e)`` gives the rate for epoch ``e``; ``observe(loss)`` feeds
    the epoch-mean loss back (used only by the plateau schedule, which halves
    the rate after ``patience`` consecutive epochs without improvement).
    """

    def __init__(self, scheduler, lr0):
        self.scheduler = scheduler
        self.lr0 = lr0
        self._best = math.inf
        self._stale = 0
        self._cuts = 0

    def epoch_lr(self, epoch):
        s = self.scheduler
        if s is None:
            return self.lr0
        if isinstance(s, CosineRestarts):
            return cosine_restarts_lr(self.lr0, s, epoch)
        if isinstance(s, ReduceOnPlateau):
            return self.lr0 * s.factor**self._cuts
        raise ValueError(f"unknown scheduler {s!r}")

    def observe(self, loss):
        s = self.scheduler
        if not isinstance(s, ReduceOnPlateau):
            return
        if loss < self._best:
            self._best = loss
            self._stale = 0
        else:
            self._stale += 1
            if self._stale >= s.patience:
                self._cuts += 1
                self._stale = 0


# ---------------------------------------------------------------------------
# Trainer


@dataclass(frozen=True)
class TrainConfig:
    lr0: float
    max_epochs: int
    steps_per_epoch: int
    batch: int
    early_stop_threshold: float
    patience: int = 3
    scheduler: object = None
    reg: Regularizer = field(default_factory=Regularizer)
    grad_clip: float = None

    def __post_init__(self):
        if self.lr0 <= 0 or self.early_stop_threshold <= 0:
            raise ValueError("lr0 and early_stop_threshold must be positive")
        if self.max_epochs < 0 or self.steps_per_epoch < 1 or self.batch < 1:
            raise ValueError("invalid epoch/step/batch counts")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")


@dataclass
class TrainReport:
    loss_curve: list
    converged: bool
    epochs_run: int
    initial_params_ref: str
    final_params_ref: str
    initial_params: RnnParams
    final_params: RnnParams
    failure: dict = None


def train(spec, mode, cfg, seed, checkpoint_dir=None, config_hash=None):
    """Train one network on fresh seeded batches.

    One epoch runs ``cfg.steps_per_epoch`` batches, each drawn from its own
    (seed, epoch, step) stream. Training stops early once the epoch-mean task
    loss stays at or below ``early_stop_threshold`` for ``patience``
    consecutive epochs. The recorded loss curve is the task loss; penalty
    terms enter the gradients but not the stopping rule.
    """
    params = init_params(mode.width, spec.input_dim, spec.output_dim, mode, seed)
    initial = params.copy()
    init_ref, final_ref = _checkpoint_refs(seed, checkpoint_dir)
    if checkpoint_dir is not None:
        from .checkpoint import save_checkpoint

        save_checkpoint(initial, init_ref, seed=seed, config_hash=config_hash)

    sched = LrScheduler(cfg.scheduler, cfg.lr0)
    pdict = params.as_dict()
    state = adam_init(pdict)
    curve = []
    converged = False
    streak = 0
    failure = None
    epochs_run = 0

    for epoch in range(cfg.max_epochs):
        lr = sched.epoch_lr(epoch)
        if mode.mode is ParamMode.MUP:
            lr = mup_lr(mode.gamma, lr)
        losses = np.empty(cfg.steps_per_epoch)
        try:
            for step in range(cfg.steps_per_epoch):
                batch = generate(spec, derive_seed(STREAM_BATCH, seed, epoch, step), cfg.batch)
                task_loss, _, grads = loss_and_grads(params.with_arrays(pdict), batch, cfg.reg)
                if cfg.grad_clip is not None:
                    grads = clip_gradients(grads, cfg.grad_clip)
                pdict, state = adam_step(state, pdict, grads, lr)
                losses[step] = task_loss
        except NumericFailure as exc:
            failure = {"epoch": epoch, "step": step, "message": str(exc)}
            epochs_run = epoch
            break
        mean_loss = float(losses.mean())
        curve.append(mean_loss)
        sched.observe(mean_loss)
        epochs_run = epoch + 1
        streak = streak + 1 if mean_loss <= cfg.early_stop_threshold else 0
        if streak >= cfg.patience:
            converged = True
            break

    final = params.with_arrays(pdict)
    if checkpoint_dir is not None:
        from .checkpoint import save_checkpoint

        save_checkpoint(final, final_ref, seed=seed, config_hash=config_hash)
    return TrainReport(
        loss_curve=curve,
        converged=converged,
        epochs_run=epochs_run,
        initial_params_ref=str(init_ref),
        final_params_ref=str(final_ref),
        initial_params=initial,
        final_params=final,
        failure=failure,
    )


def _checkpoint_refs(seed, checkpoint_dir):
    if checkpoint_dir is None:
        return f"memory:seed{seed}:init", f"memory:seed{seed}:final"
    from pathlib import Path

    d = Path(checkpoint_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / f"seed{seed}_init.rnnd", d / f"seed{seed}_final.rnnd"
