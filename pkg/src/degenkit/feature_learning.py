"""Feature-learning strength metrics.

Three complementary views of how far training moved a network away from its
initialization: the (normalized) Frobenius norm of the recurrent weight
change, the alignment of the empirical neural tangent kernel before vs after
training, and the alignment of the hidden-representation Gram matrices.
Lower kernel/representation alignment means richer feature learning.
"""

from dataclasses import dataclass

import numpy as np

from .rnn import HiddenTrajectory, ParamMode

_ALL_BLOCKS = ("W_h", "W_x", "b", "W_out", "b_out")
# the kernel differentiates w.r.t. weights; bias gradients are excluded by
# default (the constant output-bias gradient otherwise dominates the kernel
# whenever the readout scale is small, masking all feature structure)
_WEIGHT_BLOCKS = ("W_h", "W_x", "W_out")


def weight_change_norm(W_T, W_0, normalize=False):
    """||W_T - W_0||_F, divided by the parameter count when ``normalize``."""
    W_T = np.asarray(W_T, dtype=np.float64)
    W_0 = np.asarray(W_0, dtype=np.float64)
    if W_T.shape != W_0.shape:
        raise ValueError(f"shape mismatch: {W_T.shape} vs {W_0.shape}")
    norm = float(np.linalg.norm(W_T - W_0))
    return norm / W_T.size if normalize else norm


@dataclass
class KernelMatrix:
    """Gram matrix of per-(sample, channel) output gradients."""

    K: np.ndarray
    probe_id: str

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"kernel must be square, got {K.shape}")
        self.K = K


def empirical_ntk(params, probe, t_eval=None, probe_id="probe", blocks=_WEIGHT_BLOCKS):
    """Empirical NTK of the readout at one time step on a fixed probe batch.

    Entry [a, b] is the inner product of the gradients of outputs a and b
    with respect to the weight matrices, where outputs are indexed
    sample-major: row = sample * n_channels + channel. ``t_eval`` defaults to
    the final step. ``blocks`` selects the contributing parameter blocks
    (weights only by default; biases can be added through the hook).
    """
    G = output_gradients(params, probe.inputs, t_eval=t_eval, blocks=blocks)
    return KernelMatrix(G @ G.T, probe_id=probe_id)


def output_gradients(params, inputs, t_eval=None, blocks=_WEIGHT_BLOCKS):
    """Per-(sample, channel) gradients of the output at ``t_eval``.

    Returns an array shaped (batch * p, n_params) with the selected parameter
    blocks flattened and concatenated in a fixed order.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    B, T, m = inputs.shape
    n, p = params.n, params.p
    if t_eval is None:
        t_eval = T - 1
    if not 0 <= t_eval < T:
        raise ValueError(f"t_eval must lie in [0, {T - 1}], got {t_eval}")
    unknown = [b for b in blocks if b not in _ALL_BLOCKS]
    if unknown:
        raise ValueError(f"unknown parameter blocks {unknown}")

    mode = params.param_mode
    mup = mode.mode is ParamMode.MUP
    tau, n_f = mode.tau, float(n)
    scale = 1.0 / (mode.gamma * n_f) if mup else 1.0

    # forward pass, keeping the trajectory
    H = np.empty((B, T, n))
    h = np.zeros((B, n))
    xproj = inputs @ params.W_x.T
    for t in range(T):
        if mup:
            drive = np.tanh(h) @ params.W_h.T / n_f + xproj[:, t] + params.b
            h = (1.0 - tau) * h + tau * drive
        else:
            h = np.tanh(h @ params.W_h.T + xproj[:, t] + params.b)
        H[:, t] = h
    Phi = np.tanh(H) if mup else None

    sizes = {"W_h": n * n, "W_x": n * m, "b": n, "W_out": p * n, "b_out": p}
    width = sum(sizes[b] for b in blocks)
    G = np.zeros((B * p, width))

    need_recurrent = any(b in blocks for b in ("W_h", "W_x", "b"))
    for c in range(p):
        gW_h = np.zeros((B, n, n))
        gW_x = np.zeros((B, n, m))
        gb = np.zeros((B, n))
        if need_recurrent:
            carry = np.zeros((B, n))
            for t in range(t_eval, -1, -1):
                if mup:
                    direct = scale * params.W_out[c] if t == t_eval else 0.0
                    dphi = 1.0 - Phi[:, t] ** 2
                    hbar = dphi * (direct + (tau / n_f) * (carry @ params.W_h))
                    hbar += (1.0 - tau) * carry
                    prev = Phi[:, t - 1] if t > 0 else np.zeros((B, n))
                    gW_h += (tau / n_f) * np.einsum("bi,bj->bij", hbar, prev)
                    gW_x += tau * np.einsum("bi,bj->bij", hbar, inputs[:, t])
                    gb += tau * hbar
                    carry = hbar
                else:
                    hbar = params.W_out[c] + carry if t == t_eval else carry
                    abar = hbar * (1.0 - H[:, t] ** 2)
                    prev = H[:, t - 1] if t > 0 else np.zeros((B, n))
                    gW_h += np.einsum("bi,bj->bij", abar, prev)
                    gW_x += np.einsum("bi,bj->bij", abar, inputs[:, t])
                    gb += abar
                    carry = abar @ params.W_h
        gW_out = np.zeros((B, p, n))
        gW_out[:, c, :] = scale * (Phi[:, t_eval] if mup else H[:, t_eval])
        gb_out = np.zeros((B, p))
        gb_out[:, c] = 1.0

        per_block = {"W_h": gW_h, "W_x": gW_x, "b": gb, "W_out": gW_out, "b_out": gb_out}
        row = np.concatenate([per_block[b].reshape(B, -1) for b in blocks], axis=1)
        G[c::p] = row
    return G


def kernel_alignment(Kf, K0):
    """Tr(Kf K0) / (||Kf||_F ||K0||_F); 1 means the kernel kept its direction."""
    if Kf.probe_id != K0.probe_id:
        raise ValueError(
            f"kernels come from different probes: {Kf.probe_id!r} vs {K0.probe_id!r}"
        )
    return _alignment(Kf.K, K0.K)


def representation_alignment(h_T, h_0):
    """Alignment of Gram matrices R = H^T H of two activation records on the
    same probe inputs (no centering)."""
    A = h_T.flatten() if isinstance(h_T, HiddenTrajectory) else np.asarray(h_T, dtype=np.float64)
    B = h_0.flatten() if isinstance(h_0, HiddenTrajectory) else np.asarray(h_0, dtype=np.float64)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"sample counts differ: {A.shape[0]} vs {B.shape[0]}")
    return _alignment(A.T @ A, B.T @ B)


def _alignment(M1, M2):
    if M1.shape != M2.shape:
        raise ValueError(f"shape mismatch: {M1.shape} vs {M2.shape}")
    n1 = np.linalg.norm(M1)
    n2 = np.linalg.norm(M2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("alignment undefined for a zero matrix")
    return float(np.sum(M1 * M2.T) / (n1 * n2))
