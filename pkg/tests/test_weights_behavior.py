import numpy as np
import pytest
from hypothesis import given, strategies as st

import degenkit as dk
from degenkit.exceptions import InsufficientData
from degenkit.rng import make_rng
from degenkit.tasks import make_ood_variant, nbff_spec
from degenkit.training import masked_mse
from degenkit.weights_behavior import (
    OodResult,
    behavioral_degeneracy,
    ood_eval,
    pif_distance,
    pif_distance_bruteforce,
)

seeds = st.integers(0, 10_000)


# ---------------------------------------------------------------------------
# permutation-invariant Frobenius distance


def test_pif_permuted_copy_is_zero():
    rng = make_rng(0)
    W = rng.normal(size=(12, 12))
    p = rng.permutation(12)
    assert pif_distance(W, W[np.ix_(p, p)]) == 0.0


def test_pif_two_by_two_swap():
    W1 = np.array([[1.0, 2.0], [3.0, 4.0]])
    W2 = np.array([[4.0, 3.0], [2.0, 1.0]])
    assert pif_distance(W1, W2) == 0.0
    assert pif_distance_bruteforce(W1, W2) == 0.0


@given(seeds)
def test_pif_upper_bound_is_plain_frobenius(seed):
    rng = np.random.default_rng(seed)
    W1 = rng.normal(size=(5, 5))
    W2 = rng.normal(size=(5, 5))
    assert pif_distance(W1, W2, restarts=4) <= np.linalg.norm(W1 - W2) + 1e-12


def test_pif_self_distance_and_symmetry():
    rng = make_rng(1)
    W1 = rng.normal(size=(7, 7))
    W2 = rng.normal(size=(7, 7))
    assert pif_distance(W1, W1) == 0.0
    assert pif_distance(W1, W2) == pif_distance(W2, W1)


@given(seeds)
def test_pif_invariant_to_shared_conjugation(seed):
    rng = np.random.default_rng(seed)
    W1 = rng.normal(size=(5, 5))
    W2 = rng.normal(size=(5, 5))
    p = rng.permutation(5)
    a = pif_distance(W1, W2)
    b = pif_distance(W1[np.ix_(p, p)], W2[np.ix_(p, p)])
    assert a == pytest.approx(b, abs=1e-6)


def test_pif_matches_bruteforce_small():
    rng = make_rng(2)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        W1 = rng.normal(size=(n, n))
        W2 = rng.normal(size=(n, n))
        assert pif_distance(W1, W2) == pytest.approx(
            pif_distance_bruteforce(W1, W2), abs=1e-9
        )


def test_pif_normalization_divides_by_parameter_count():
    rng = make_rng(3)
    W1 = rng.normal(size=(4, 4))
    W2 = rng.normal(size=(4, 4))
    assert pif_distance(W1, W2, normalize=True) == pytest.approx(
        pif_distance(W1, W2) / 16.0
    )


def test_pif_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        pif_distance(np.zeros((3, 3)), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        pif_distance(np.zeros((3, 2)), np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# OOD evaluation


def test_ood_eval_in_distribution_equals_masked_mse():
    spec = nbff_spec(trial_len=30)
    params = dk.init_params(8, 1, 1, dk.Parameterization(width=8), 0)
    res = ood_eval(params, spec, seed=5, batch=16, network_id="net0")
    trial = dk.generate(spec, 5, 16)
    out, _ = dk.forward(params, trial.inputs)
    assert res.ood_loss == masked_mse(out, trial.targets, trial.loss_mask)
    assert res.converged is True


def test_ood_eval_deterministic():
    spec = make_ood_variant(nbff_spec(trial_len=30))
    params = dk.init_params(8, 1, 1, dk.Parameterization(width=8), 1)
    a = ood_eval(params, spec, seed=3, batch=8)
    b = ood_eval(params, spec, seed=3, batch=8)
    assert a.ood_loss == b.ood_loss


def test_ood_eval_matches_independent_forward_reimplementation():
    spec = make_ood_variant(nbff_spec(trial_len=25))
    params = dk.init_params(6, 1, 1, dk.Parameterization(width=6), 2)
    res = ood_eval(params, spec, seed=9, batch=8)

    trial = dk.generate(spec, 9, 8)
    # scalar-loop forward oracle, written independently of rnn.forward
    B, T, _ = trial.inputs.shape
    n = 6
    total, count = 0.0, 0
    for b in range(B):
        h = np.zeros(n)
        for t in range(T):
            h = np.tanh(params.W_h @ h + params.W_x @ trial.inputs[b, t] + params.b)
            y = params.W_out @ h + params.b_out
            total += float(np.sum((y - trial.targets[b, t]) ** 2))
            count += trial.targets.shape[2]
    assert res.ood_loss == pytest.approx(total / count, abs=1e-10)


# ---------------------------------------------------------------------------
# behavioral degeneracy


def _results(losses, converged=None):
    converged = converged or [True] * len(losses)
    return [OodResult(i, l, c) for i, (l, c) in enumerate(zip(losses, converged))]


def test_behavioral_degeneracy_constant_losses():
    sigma, mean = behavioral_degeneracy(_results([1.0, 1.0, 1.0]))
    assert sigma == 0.0
    assert mean == 1.0


def test_behavioral_degeneracy_population_std():
    sigma, mean = behavioral_degeneracy(_results([0.0, 2.0]))
    assert sigma == 1.0  # divide by N, not N-1
    assert mean == 1.0


def test_behavioral_degeneracy_filters_unconverged():
    mixed = _results([0.0, 2.0, 5.0], converged=[True, True, False])
    assert behavioral_degeneracy(mixed) == behavioral_degeneracy(_results([0.0, 2.0]))


def test_behavioral_degeneracy_insufficient_data():
    with pytest.raises(InsufficientData):
        behavioral_degeneracy(_results([1.0]))
    with pytest.raises(InsufficientData):
        behavioral_degeneracy(_results([1.0, 2.0], converged=[True, False]))


@given(st.lists(st.floats(0.0, 100.0), min_size=2, max_size=8), st.floats(0.1, 10.0))
def test_behavioral_degeneracy_scale_equivariant(losses, c):
    s1, m1 = behavioral_degeneracy(_results(losses))
    s2, m2 = behavioral_degeneracy(_results([c * l for l in losses]))
    assert s2 == pytest.approx(c * s1, rel=1e-9, abs=1e-9)
    assert m2 == pytest.approx(c * m1, rel=1e-9, abs=1e-9)


@given(st.permutations(range(5)))
def test_behavioral_degeneracy_permutation_invariant(perm):
    losses = [0.5, 1.5, 3.0, 0.1, 2.2]
    s1, m1 = behavioral_degeneracy(_results(losses))
    s2, m2 = behavioral_degeneracy(_results([losses[i] for i in perm]))
    assert s1 == pytest.approx(s2)
    assert m1 == pytest.approx(m2)
