"""Dynamics-level degeneracy metrics.

The main pipeline compares networks as dynamical systems: PCA-reduce hidden
trajectories to the subspace holding 99% of the variance, delay-embed them,
fit a linear one-step forward operator to each network by least squares, and
score each pair by the minimal Frobenius distance between operators under
orthogonal conjugation,

    d(A_x, A_y) = min_{C in O(k)} ||A_x - C A_y C^-1||_F.

The conjugation search runs projected gradient descent on the orthogonal
group with a Cayley retraction, from the identity, eigenstructure-aligned
starts, and random restarts covering both components of O(k).

Also here: an SVCCA representational distance and classical MDS embedding of
distance matrices.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .rng import STREAM_SOLVER, make_rng
from .rnn import HiddenTrajectory


@dataclass(frozen=True)
class DsaConfig:
    pca_var_threshold: float = 0.99
    lag_min: int = 1
    lag_max: int = 30
    procrustes_restarts: int = 8
    procrustes_tol: float = 1e-9
    procrustes_max_iters: int = 2000

    def __post_init__(self):
        if not 0 < self.pca_var_threshold <= 1:
            raise ValueError("pca_var_threshold must lie in (0, 1]")
        if not 1 <= self.lag_min <= self.lag_max:
            raise ValueError("need 1 <= lag_min <= lag_max")
        if self.procrustes_restarts < 0 or self.procrustes_max_iters < 1:
            raise ValueError("invalid solver budget")


@dataclass
class PcaReduction:
    reduced: np.ndarray          # (trials, time, k)
    components: np.ndarray       # (k, units)
    mean: np.ndarray             # (units,)
    explained: float             # variance fraction captured by the k dims
    k: int


@dataclass
class ForwardOperator:
    """One-step linear operator fit to delay-embedded trajectories."""

    A: np.ndarray
    lag: int
    k: int
    recon_error: float = 0.0
    recon_error_normalized: float = 0.0

    @classmethod
    def from_matrix(cls, A, lag=1):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"operator must be square, got {A.shape}")
        return cls(A=A, lag=lag, k=A.shape[0])


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances over an ensemble, zero diagonal."""

    D: np.ndarray
    metric_tag: str
    labels: tuple = None

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError(f"distance matrix must be square, got {D.shape}")
        if not np.allclose(D, D.T, atol=1e-8):
            raise ValueError("distance matrix must be symmetric")
        if not np.allclose(np.diag(D), 0.0, atol=1e-8):
            raise ValueError("distance matrix must have zero diagonal")
        if D.min() < -1e-12:
            raise ValueError("distances must be nonnegative")
        self.D = D

    @property
    def size(self):
        return self.D.shape[0]


def mean_offdiagonal(D):
    """Mean of the off-diagonal entries: the scalar degeneracy of a matrix."""
    D = D.D if isinstance(D, DistanceMatrix) else np.asarray(D)
    n = D.shape[0]
    if n < 2:
        raise ValueError("need at least a 2x2 matrix")
    return float((D.sum() - np.trace(D)) / (n * (n - 1)))


# ---------------------------------------------------------------------------
# PCA reduction and delay embedding


def pca_reduce(traj, threshold, n_components=None):
    """Project trajectories onto the leading principal subspace.

    Flattens to (trials*time, units), mean-centers, and keeps the smallest
    number of components whose cumulative explained variance reaches
    ``threshold``. ``n_components`` overrides the count (used to equalize
    dimensions across an ensemble by retaining extra components).
    """
    values = traj.values if isinstance(traj, HiddenTrajectory) else np.asarray(traj)
    trials, time, units = values.shape
    flat = values.reshape(trials * time, units)
    mean = flat.mean(axis=0)
    centered = flat - mean
    _, s, Vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2
    total = var.sum()
    if total <= 0:
        raise ValueError("trajectories have zero variance")
    rank = int(np.sum(s > s[0] * 1e-12))
    ratios = var[:rank] / total
    cum = np.cumsum(ratios)
    k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    k = min(k, rank)
    if n_components is not None:
        if n_components < 1:
            raise ValueError("n_components must be positive")
        k = min(n_components, rank)
    components = Vt[:k]
    reduced = (centered @ components.T).reshape(trials, time, k)
    return PcaReduction(reduced, components, mean, float(cum[k - 1]), k)


def delay_embed(reduced, lag):
    """Stack ``lag`` consecutive frames into rows, per trial.

    Returns (X, Y) where row t of X holds frames t .. t+lag-1 and the same
    row of Y holds frames t+1 .. t+lag; trial boundaries are never crossed.
    """
    values = reduced.reduced if isinstance(reduced, PcaReduction) else np.asarray(reduced)
    trials, time, k = values.shape
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}")
    if lag >= time:
        raise ValueError(f"lag {lag} must be smaller than trial length {time}")
    rows = time - lag
    X = np.empty((trials, rows, lag * k))
    Y = np.empty((trials, rows, lag * k))
    for j in range(lag):
        X[:, :, j * k : (j + 1) * k] = values[:, j : j + rows]
        Y[:, :, j * k : (j + 1) * k] = values[:, j + 1 : j + 1 + rows]
    return X.reshape(trials * rows, lag * k), Y.reshape(trials * rows, lag * k)


def fit_dmd(X, Y):
    """Least-squares one-step operator: A = argmin ||Y - X A^T||_F.

    Solved through an SVD pseudoinverse with singular values below
    1e-10 * sigma_max truncated.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape:
        raise ValueError(f"X and Y must match, got {X.shape} vs {Y.shape}")
    rows, cols = X.shape
    if rows < cols:
        raise ValueError(f"need at least as many rows as columns ({rows} < {cols})")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > 1e-10 * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    A = (Vt.T * inv_s) @ (U.T @ Y)   # (cols, cols): maps x_t -> x_{t+1} as A.T
    A = A.T
    resid = float(np.linalg.norm(Y - X @ A.T))
    ynorm = float(np.linalg.norm(Y))
    return ForwardOperator(
        A=A,
        lag=0,
        k=cols,
        recon_error=resid,
        recon_error_normalized=resid / ynorm if ynorm > 0 else 0.0,
    )


def choose_lag(reduced, cfg):
    """Grid-search the delay lag minimizing normalized reconstruction error.

    Ties break toward the smaller lag. Errors from infeasible fits propagate.
    """
    values = reduced.reduced if isinstance(reduced, PcaReduction) else np.asarray(reduced)
    time = values.shape[1]
    if cfg.lag_max >= time:
        raise ValueError(f"lag_max {cfg.lag_max} must be smaller than trial length {time}")
    best_lag, best_err = None, np.inf
    for lag in range(cfg.lag_min, cfg.lag_max + 1):
        X, Y = delay_embed(values, lag)
        op = fit_dmd(X, Y)
        # residuals at numerical-noise level count as exact fits, so ties
        # break toward the smaller lag as intended
        err = op.recon_error_normalized if op.recon_error_normalized > 1e-12 else 0.0
        if err < best_err:
            best_err = err
            best_lag = lag
    return best_lag


# ---------------------------------------------------------------------------
# Orthogonal-conjugation distance between operators


def dsa_distance(ax, ay, cfg=DsaConfig()):
    """min over orthogonal C of ||A_x - C A_y C^-1||_F.

    Arguments may be ForwardOperators or raw square matrices of equal size.
    Arguments are ordered canonically first, so the distance is exactly
    symmetric in its inputs.
    """
    A = ax.A if isinstance(ax, ForwardOperator) else np.asarray(ax, dtype=np.float64)
    B = ay.A if isinstance(ay, ForwardOperator) else np.asarray(ay, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"operators must be square and equal-size, got {A.shape} vs {B.shape}")
    if A.tobytes() > B.tobytes():
        A, B = B, A
    f_best, converged = _min_conjugate_frobenius_sq(A, B, cfg)
    if not converged:
        warnings.warn(
            "orthogonal conjugation search hit its iteration limit; "
            "returning the best value found",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(np.sqrt(max(f_best, 0.0)))


def _objective(A, B, Q):
    E = A @ Q - Q @ B
    return float(np.sum(E * E))


def _min_conjugate_frobenius_sq(A, B, cfg):
    """Minimize ||A Q - Q B||_F^2 over O(k) (equals ||A - Q B Q^T||_F^2)."""
    k = A.shape[0]
    if k == 1:
        return _objective(A, B, np.eye(1)), True

    inits = [np.eye(k)]
    flip = np.eye(k)
    flip[-1, -1] = -1.0
    inits.append(flip)
    inits.extend(_eig_align_inits(A, B))
    rng = make_rng(STREAM_SOLVER, 0xD5A)
    for i in range(cfg.procrustes_restarts):
        inits.append(_haar_orthogonal(rng, k, det_sign=1 if i % 2 == 0 else -1))

    f_best = np.inf
    any_converged = False
    for Q0 in inits:
        f, _, conv = _cayley_descent(A, B, Q0, cfg.procrustes_tol, cfg.procrustes_max_iters)
        if f < f_best:
            f_best = f
        any_converged = any_converged or conv
        if f_best < 1e-26:  # exact conjugacy found; further restarts are moot
            any_converged = True
            break
    return f_best, any_converged


def _cayley_descent(A, B, Q, tol, max_iters):
    """Armijo-backtracked Riemannian descent with a Cayley retraction.

    Stops once the per-step objective decrease falls below ``tol`` relative
    to the current objective (with a hard floor near machine precision), so
    zero-residual minima are driven all the way down while strictly positive
    minima terminate quickly.
    """
    k = A.shape[0]
    eye = np.eye(k)
    f = _objective(A, B, Q)
    scale = float(np.linalg.norm(A) + np.linalg.norm(B)) + 1e-12
    floor = (1e-12 * scale) ** 2
    tau = 1.0 / scale**2
    converged = False
    for it in range(max_iters):
        if f <= floor:
            converged = True
            break
        E = A @ Q - Q @ B
        G = 2.0 * (A.T @ E - E @ B.T)
        WQ = G @ Q.T
        W = 0.5 * (WQ - WQ.T)
        wnorm_sq = float(np.sum(W * W))
        if wnorm_sq <= (1e-15 * scale**2) ** 2:
            converged = True
            break
        # backtrack until Armijo decrease holds
        accepted = False
        for _ in range(60):
            M = eye + (0.5 * tau) * W
            Qn = np.linalg.solve(M, Q - (0.5 * tau) * (W @ Q))
            fn = _objective(A, B, Qn)
            if fn <= f - 1e-4 * tau * wnorm_sq:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            converged = True  # no further decrease is numerically possible
            break
        decrease = f - fn
        Q, f = Qn, fn
        tau *= 1.3
        if it % 100 == 99:  # undo slow orthogonality drift from the retraction
            u, _, vt = np.linalg.svd(Q)
            Q = u @ vt
            f = _objective(A, B, Q)
        if decrease < tol * max(f, floor):
            converged = True
            break
    return f, Q, converged


def _haar_orthogonal(rng, k, det_sign=1):
    """Haar-distributed orthogonal matrix with the requested determinant sign."""
    Z = rng.normal(size=(k, k))
    Q, R = np.linalg.qr(Z)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) * det_sign < 0:
        Q[:, -1] = -Q[:, -1]
    return Q


def _eig_align_inits(A, B):
    """Starting points that align the eigenstructure of A and B.

    For diagonalizable operators with matching spectra (in particular for
    exact orthogonal conjugates) the polar factor of S_A S_B^{-1} recovers the
    conjugating matrix, so descent starts at (or near) the optimum.
    """
    try:
        SA = _canonical_real_eigenbasis(A)
        SB = _canonical_real_eigenbasis(B)
        M = SA @ np.linalg.inv(SB)
        U, _, Vt = np.linalg.svd(M)
        Q = U @ Vt
    except np.linalg.LinAlgError:
        return []
    flipped = Q.copy()
    flipped[:, -1] = -flipped[:, -1]
    return [Q, flipped]


def _canonical_real_eigenbasis(A):
    """Real basis from the eigendecomposition with phase and sign conventions
    that commute with orthogonal changes of basis.

    Phases of complex eigenvectors are fixed through the bilinear form v^T v
    (invariant under real orthogonal maps), and residual +/- signs are fixed
    relative to previously placed eigenvectors via Re(a^T v). Two operators
    related by orthogonal conjugation then yield bases related by exactly
    that conjugation (up to a harmless global sign), so aligning the bases
    recovers the conjugating matrix.
    """
    w, V = np.linalg.eig(A)
    order = np.lexsort((-w.imag, -w.real))
    w, V = w[order], V[:, order]
    scale = max(np.abs(w).max(), 1.0)
    anchors = []
    cols = []
    i = 0
    while i < len(w):
        lam, v = w[i], V[:, i]
        if abs(lam.imag) <= 1e-10 * scale:
            u = np.real(v)
            nrm = np.linalg.norm(u)
            if nrm <= 1e-12:
                raise np.linalg.LinAlgError("degenerate real eigenvector")
            u = _fix_sign(u / nrm, anchors)
            anchors.append(u.astype(complex))
            cols.append(u)
            i += 1
        else:
            if i + 1 >= len(w) or abs(w[i + 1] - np.conj(lam)) > 1e-8 * scale:
                raise np.linalg.LinAlgError("conjugate pair not adjacent")
            q = v @ v  # bilinear (non-conjugated) square
            if abs(q) <= 1e-10 * float(np.real(np.vdot(v, v))):
                raise np.linalg.LinAlgError("isotropic eigenvector")
            v = v * np.exp(-0.5j * np.angle(q))
            v = _fix_sign(v, anchors)
            re, im = np.real(v), np.imag(v)
            re_n, im_n = np.linalg.norm(re), np.linalg.norm(im)
            if re_n <= 1e-12 or im_n <= 1e-12:
                raise np.linalg.LinAlgError("degenerate complex pair")
            anchors.append(v)
            cols.append(re / re_n)
            cols.append(im / im_n)
            i += 2
    S = np.stack(cols, axis=1)
    if np.linalg.cond(S) > 1e10:
        raise np.linalg.LinAlgError("ill-conditioned eigenbasis")
    return S


def _fix_sign(v, anchors):
    """Resolve the +/- ambiguity of an eigenvector against earlier ones."""
    vnorm = np.linalg.norm(v)
    for a in anchors:
        s = float(np.real(np.sum(a * v)))
        if abs(s) > 1e-8 * vnorm * np.linalg.norm(a):
            return -v if s < 0 else v
    # no usable anchor (first vector, or orthogonal spectra): local rule;
    # at worst this flips a global sign, which conjugation cannot see
    j = int(np.argmax(np.abs(v)))
    ref = float(np.real(v[j]))
    return -v if ref < 0 else v


# ---------------------------------------------------------------------------
# Ensemble pipeline


@dataclass
class DsaResult:
    matrix: DistanceMatrix
    degeneracy: float
    shared_lag: int
    retained_dim: int


def pairwise_dsa(trajs, cfg=DsaConfig(), labels=None):
    """Full pipeline over an ensemble of trajectories from one shared batch.

    Per-network PCA runs first; all networks are then re-projected to the
    ensemble's largest retained dimension (extra principal components, never
    zero padding) so operators are conjugable. A single shared lag (lower
    median of the per-network optima) keeps the operators comparable.
    """
    if len(trajs) < 2:
        raise ValueError("need at least two trajectories")
    reductions = [pca_reduce(t, cfg.pca_var_threshold) for t in trajs]
    k_shared = max(r.k for r in reductions)
    # exact rank deficiency can make padding impossible; fall back to the
    # largest dimension every network can supply
    k_shared = min([k_shared] + [_max_rank(t) for t in trajs])
    reductions = [pca_reduce(t, cfg.pca_var_threshold, n_components=k_shared) for t in trajs]

    lags = sorted(choose_lag(r, cfg) for r in reductions)
    shared_lag = lags[(len(lags) - 1) // 2]

    ops = []
    for r in reductions:
        X, Y = delay_embed(r, shared_lag)
        op = fit_dmd(X, Y)
        op.lag = shared_lag
        ops.append(op)

    n = len(ops)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = dsa_distance(ops[i], ops[j], cfg)
    matrix = DistanceMatrix(D, metric_tag="dsa", labels=tuple(labels) if labels else None)
    return DsaResult(matrix, mean_offdiagonal(D), shared_lag, k_shared)


def _max_rank(traj):
    values = traj.values if isinstance(traj, HiddenTrajectory) else np.asarray(traj)
    trials, time, units = values.shape
    flat = values.reshape(trials * time, units)
    s = np.linalg.svd(flat - flat.mean(axis=0), compute_uv=False)
    return int(np.sum(s > s[0] * 1e-12)) if s[0] > 0 else 0


# ---------------------------------------------------------------------------
# SVCCA representational distance


def svcca_distance(h1, h2, var_threshold=0.99):
    """1 - mean canonical correlation between SVD-truncated activations.

    Both records are flattened to (samples, units), mean-centered, truncated
    to the subspace holding ``var_threshold`` of their variance, and compared
    with canonical correlation analysis.
    """
    X = h1.flatten() if isinstance(h1, HiddenTrajectory) else np.asarray(h1, dtype=np.float64)
    Y = h2.flatten() if isinstance(h2, HiddenTrajectory) else np.asarray(h2, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    Xr = _svd_truncate(X - X.mean(axis=0), var_threshold)
    Yr = _svd_truncate(Y - Y.mean(axis=0), var_threshold)
    k = max(Xr.shape[1], Yr.shape[1])
    if X.shape[0] < k:
        raise ValueError(f"fewer samples ({X.shape[0]}) than retained dimensions ({k})")
    Qx, _ = np.linalg.qr(Xr)
    Qy, _ = np.linalg.qr(Yr)
    corrs = np.clip(np.linalg.svd(Qx.T @ Qy, compute_uv=False), 0.0, 1.0)
    return float(1.0 - corrs.mean())


def _svd_truncate(centered, threshold):
    U, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        raise ValueError("activations have zero variance")
    rank = int(np.sum(s > s[0] * 1e-12))
    var = s[:rank] ** 2
    cum = np.cumsum(var / var.sum())
    k = int(np.searchsorted(cum, threshold - 1e-12) + 1)
    k = min(k, rank)
    return U[:, :k] * s[:k]


# ---------------------------------------------------------------------------
# Classical MDS


def mds_embed(D, dim):
    """Classical MDS of a distance matrix into ``dim`` coordinates.

    Double-centers -0.5 * J D^2 J, takes the top eigenpairs (negative
    eigenvalues clamped to zero), and returns centered coordinates
    eigenvector * sqrt(eigenvalue).
    """
    D = D.D if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError(f"distance matrix must be square, got {D.shape}")
    if not np.allclose(D, D.T, atol=1e-9) or not np.allclose(np.diag(D), 0.0, atol=1e-9):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    if not 1 <= dim <= n - 1:
        raise ValueError(f"dim must lie in [1, {n - 1}], got {dim}")
    J = np.eye(n) - np.ones((n, n)) / n
    Bmat = -0.5 * J @ (D**2) @ J
    evals, evecs = np.linalg.eigh(Bmat)
    order = np.argsort(evals)[::-1]
    lam = np.clip(evals[order[:dim]], 0.0, None)
    coords = evecs[:, order[:dim]] * np.sqrt(lam)
    return coords - coords.mean(axis=0)
