import numpy as np
import pytest
from hypothesis import given, strategies as st

import degenkit as dk
from degenkit.feature_learning import (
    KernelMatrix,
    empirical_ntk,
    kernel_alignment,
    output_gradients,
    representation_alignment,
    weight_change_norm,
)
from degenkit.rnn import Parameterization
from degenkit.tasks import nbff_spec


def test_weight_change_norm_zero_and_normalized():
    W = np.random.default_rng(0).normal(size=(3, 3))
    assert weight_change_norm(W, W) == 0.0
    assert weight_change_norm(W + 1.0, W, normalize=True) == pytest.approx(1.0 / 3.0)


@given(st.integers(0, 10_000))
def test_weight_change_norm_matches_sum_of_squares(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    expect = np.sqrt(sum((a - b) ** 2 for a, b in zip(A.ravel(), B.ravel())))
    assert weight_change_norm(A, B) == pytest.approx(expect, abs=1e-12)


def _probe(spec, seed, batch):
    return dk.generate(spec, seed, batch)


def test_ntk_single_sample_is_squared_norm():
    spec = nbff_spec(trial_len=8)
    params = dk.init_params(5, 1, 1, Parameterization(width=5), 0)
    K = empirical_ntk(params, _probe(spec, 1, 1)).K
    assert K.shape == (1, 1)
    assert K[0, 0] > 0.0
    G = output_gradients(params, _probe(spec, 1, 1).inputs)
    assert K[0, 0] == pytest.approx(float((G @ G.T)[0, 0]), abs=1e-12)


def test_ntk_duplicated_sample_duplicates_rows():
    spec = nbff_spec(trial_len=8)
    params = dk.init_params(5, 1, 2, Parameterization(width=5), 1)
    trial = _probe(spec, 2, 2)
    doubled = dk.TrialBatch(
        np.concatenate([trial.inputs, trial.inputs[:1]]),
        np.concatenate([trial.targets, trial.targets[:1]]),
        np.concatenate([trial.loss_mask, trial.loss_mask[:1]]),
    )
    K = empirical_ntk(params, doubled).K
    p = 2
    np.testing.assert_allclose(K[:p], K[2 * p : 3 * p], atol=1e-12)
    np.testing.assert_allclose(K[:, :p], K[:, 2 * p : 3 * p], atol=1e-12)


def test_ntk_readout_only_equals_hidden_gram():
    # restricting the gradient to the readout weights must reproduce the
    # Gram matrix of hidden states
    spec = nbff_spec(trial_len=10)
    params = dk.init_params(6, 1, 1, Parameterization(width=6), 3)
    trial = _probe(spec, 4, 5)
    K = empirical_ntk(params, trial, blocks=("W_out",)).K
    _, traj = dk.forward(params, trial.inputs)
    H = traj.values[:, -1, :]
    np.testing.assert_allclose(K, H @ H.T, atol=1e-8)


@pytest.mark.parametrize("mode", [
    Parameterization(width=4),
    Parameterization(width=4, mode="mup", gamma=0.8, tau=0.5),
])
def test_ntk_gradients_match_finite_differences(mode):
    blocks = ("W_h", "W_x", "b", "W_out", "b_out")
    spec = nbff_spec(trial_len=6)
    params = dk.init_params(4, 1, 1, mode, 5)
    trial = _probe(spec, 6, 3)
    G = output_gradients(params, trial.inputs, blocks=blocks)

    rng = np.random.default_rng(0)
    direction = {k: rng.normal(size=v.shape) for k, v in params.as_dict().items()}
    flat_dir = np.concatenate([direction[k].ravel() for k in blocks])
    eps = 1e-6

    def outputs_at(scale):
        moved = params.with_arrays(
            {k: v + scale * direction[k] for k, v in params.as_dict().items()}
        )
        out, _ = dk.forward(moved, trial.inputs)
        return out[:, -1, :]

    fd = (outputs_at(eps) - outputs_at(-eps)) / (2 * eps)  # (batch, p)
    got = (G @ flat_dir).reshape(3, 1)
    np.testing.assert_allclose(got, fd, rtol=1e-4, atol=1e-8)


def test_ntk_rejects_bad_arguments():
    spec = nbff_spec(trial_len=6)
    params = dk.init_params(4, 1, 1, Parameterization(width=4), 0)
    trial = _probe(spec, 0, 2)
    with pytest.raises(ValueError):
        empirical_ntk(params, trial, t_eval=10)
    with pytest.raises(ValueError):
        empirical_ntk(params, trial, blocks=("nope",))


def test_kernel_alignment_identity_and_scale():
    K = KernelMatrix(np.array([[2.0, 0.3], [0.3, 1.0]]), "p")
    assert kernel_alignment(K, K) == pytest.approx(1.0)
    K2 = KernelMatrix(2.0 * K.K, "p")
    assert kernel_alignment(K2, K) == pytest.approx(1.0)


def test_kernel_alignment_orthogonal_kernels():
    K0 = KernelMatrix(np.diag([1.0, 0.0]), "p")
    Kf = KernelMatrix(np.diag([0.0, 1.0]), "p")
    assert kernel_alignment(Kf, K0) == pytest.approx(0.0)


def test_kernel_alignment_invariant_to_joint_conjugation():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    K0, Kf = A @ A.T, B @ B.T
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    a = kernel_alignment(KernelMatrix(Kf, "p"), KernelMatrix(K0, "p"))
    b = kernel_alignment(
        KernelMatrix(Q @ Kf @ Q.T, "p"), KernelMatrix(Q @ K0 @ Q.T, "p")
    )
    assert a == pytest.approx(b, abs=1e-10)
    assert 0.0 <= a <= 1.0  # PSD inputs


def test_kernel_alignment_requires_same_probe():
    K = KernelMatrix(np.eye(2), "a")
    with pytest.raises(ValueError):
        kernel_alignment(K, KernelMatrix(np.eye(2), "b"))
    with pytest.raises(ValueError):
        kernel_alignment(KernelMatrix(np.zeros((2, 2)), "a"), K)


def test_representation_alignment_identity_and_scale():
    H = np.random.default_rng(2).normal(size=(10, 4))
    assert representation_alignment(H, H) == pytest.approx(1.0)
    assert representation_alignment(2.0 * H, H) == pytest.approx(1.0)


def test_representation_alignment_fixed_matrices():
    H_T = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]])
    H_0 = np.array([[0.5, 0.5], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    R_T, R_0 = H_T.T @ H_T, H_0.T @ H_0
    expect = np.trace(R_T @ R_0) / (np.linalg.norm(R_T) * np.linalg.norm(R_0))
    assert representation_alignment(H_T, H_0) == pytest.approx(expect, abs=1e-12)


def test_alignment_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        K1 = KernelMatrix(_rand_psd(rng, 3), "p")
        K2 = KernelMatrix(_rand_psd(rng, 3), "p")
        val = kernel_alignment(K1, K2)
        assert -1.0 - 1e-9 <= val <= 1.0 + 1e-9
        assert val >= 0.0


def _rand_psd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T
