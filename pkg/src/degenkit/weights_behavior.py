"""Weight-level and behavioral degeneracy metrics.

Weight distance is the permutation-invariant Frobenius norm

    d(W1, W2) = min_P ||W1 - P^T W2 P||_F

over neuron relabelings P, approximated by alternating linearization: each
round solves a linear assignment problem on the local gradient of the
objective and keeps the permutation if it improves, restarting from random
permutations. Behavioral degeneracy is the population standard deviation of
out-of-distribution losses over converged networks.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InsufficientData
from .rng import STREAM_SOLVER, make_rng
from .rnn import forward
from .tasks import generate
from .training import masked_mse


def pif_distance(W1, W2, normalize=False, restarts=32):
    """Permutation-invariant Frobenius distance between square matrices.

    When ``normalize`` is set the distance is divided by the parameter count
    n^2, making networks of different sizes comparable.
    """
    W1 = np.asarray(W1, dtype=np.float64)
    W2 = np.asarray(W2, dtype=np.float64)
    if W1.shape != W2.shape or W1.ndim != 2 or W1.shape[0] != W1.shape[1]:
        raise ValueError(f"need equal square matrices, got {W1.shape} vs {W2.shape}")
    if W1.tobytes() > W2.tobytes():  # canonical order: exact symmetry
        W1, W2 = W2, W1
    n = W1.shape[0]
    rng = make_rng(STREAM_SOLVER, 0x91F)
    best = _pif_local_search(W1, W2, np.arange(n))
    for _ in range(restarts):
        best = min(best, _pif_local_search(W1, W2, rng.permutation(n)))
    d = float(np.sqrt(max(best, 0.0)))
    return d / (n * n) if normalize else d


def _pif_local_search(W1, W2, perm):
    """Alternating assignment-problem linearization from one starting perm,
    polished with steepest-descent transposition (2-opt) sweeps."""
    p = np.asarray(perm)
    obj = _pif_objective(W1, W2, p)
    while True:
        improved = False
        # gradient of <W1, W2[p,p]> w.r.t. the assignment matrix
        C = W1 @ W2[:, p].T + W1.T @ W2[p, :]
        rows, cols = linear_sum_assignment(-C)
        cand = cols[np.argsort(rows)]
        cand_obj = _pif_objective(W1, W2, cand)
        if cand_obj < obj - 1e-15:
            p, obj, improved = cand, cand_obj, True
        swapped, p, obj = _pif_swap_descent(W1, W2, p, obj)
        if not (improved or swapped):
            return obj


def _pif_swap_descent(W1, W2, p, obj):
    """Repeatedly apply the best improving transposition.

    Swapping positions i and j conjugates W2[p,p] by a transposition, which
    preserves its norm, so the objective change reduces to the change of the
    inner product with W1 and all n^2 candidate deltas come out of two matrix
    products plus elementwise outer terms.
    """
    improved_any = False
    while True:
        Wp = W2[np.ix_(p, p)]
        delta = -2.0 * _swap_inner_gain(W1, Wp)
        i, j = np.unravel_index(np.argmin(delta), delta.shape)
        if delta[i, j] >= -1e-12:
            return improved_any, p, obj
        p = p.copy()
        p[i], p[j] = p[j], p[i]
        obj += float(delta[i, j])
        improved_any = True


def _swap_inner_gain(W1, Wp):
    """Gain[i,j] = <swap_ij(W1), Wp> - <W1, Wp> for every transposition,
    where swap_ij conjugates W1 by the (i, j) transposition."""
    M1 = W1 @ Wp.T          # row inner products
    M2 = W1.T @ Wp          # column inner products
    d1, d2 = np.diag(M1), np.diag(M2)
    rows_all = M1 + M1.T - d1[:, None] - d1[None, :]
    cols_all = M2 + M2.T - d2[:, None] - d2[None, :]

    a, b = np.diag(W1), np.diag(Wp)
    # the full row/col sums count the l,k in {i,j} entries, which must be
    # swapped out for the exact corner contribution
    row_li = (W1.T - a[:, None]) * (b[:, None] - Wp.T)   # l = i term
    row_lj = (a[None, :] - W1) * (Wp - b[None, :])       # l = j term
    col_ki = (W1 - a[:, None]) * (b[:, None] - Wp)       # k = i term
    col_kj = (a[None, :] - W1.T) * (Wp.T - b[None, :])   # k = j term
    corners = (
        -(a[:, None] - a[None, :]) * (b[:, None] - b[None, :])
        - (W1 - W1.T) * (Wp - Wp.T)
    )
    return rows_all + cols_all - row_li - row_lj - col_ki - col_kj + corners


def _pif_objective(W1, W2, p):
    diff = W1 - W2[np.ix_(p, p)]
    return float(np.sum(diff * diff))


def pif_distance_bruteforce(W1, W2, normalize=False):
    """Exact minimum over all n! permutations; for small n (test oracle)."""
    W1 = np.asarray(W1, dtype=np.float64)
    W2 = np.asarray(W2, dtype=np.float64)
    n = W1.shape[0]
    if n > 8:
        raise ValueError("brute force is limited to n <= 8")
    best = np.inf
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        best = min(best, _pif_objective(W1, W2, p))
    d = float(np.sqrt(best))
    return d / (n * n) if normalize else d


@dataclass
class OodResult:
    network_id: object
    ood_loss: float
    converged: bool


def ood_eval(params, spec_ood, seed, batch, converged=True, network_id=None):
    """Masked MSE of one network on a seeded batch from ``spec_ood``.

    Every ensemble member must be evaluated with the same (spec, seed, batch)
    so losses are comparable. The converged flag is carried over from the
    network's training report.
    """
    trial = generate(spec_ood, seed, batch)
    outputs, _ = forward(params, trial.inputs)
    loss = masked_mse(outputs, trial.targets, trial.loss_mask)
    return OodResult(network_id=network_id, ood_loss=loss, converged=converged)


def behavioral_degeneracy(results):
    """Population std and mean of OOD losses over converged networks.

    Uses the 1/N normalization (population, not sample, standard deviation).
    Entries with ``converged=False`` are excluded; fewer than two usable
    entries raises :class:`InsufficientData`.
    """
    losses = np.array([r.ood_loss for r in results if r.converged], dtype=np.float64)
    if losses.size < 2:
        raise InsufficientData(
            f"need >= 2 converged networks, got {losses.size}"
        )
    return float(losses.std(ddof=0)), float(losses.mean())
