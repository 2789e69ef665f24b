"""PCA reconstruction-error features.

The detector never looks at raw windows: it looks at how badly a window is
reconstructed from the top-k principal components of the training windows.
For a centered window x and the k x p transfer matrix Omega (rows are the
dominant unit eigenvectors of the training covariance), the feature vector is

    epsilon = x (Omega^T Omega - I_p),

i.e. reconstruction minus observation. Ordinary values reconstruct well,
injected shocks do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import density

DEFAULT_LATENT_DIM = 40


@dataclass
class PcaModel:
    mean: np.ndarray         # length-p training column means
    omega: np.ndarray        # k x p, rows orthonormal
    eigenvalues: np.ndarray  # k dominant eigenvalues, descending
    k: int

    @property
    def window_length(self):
        return self.mean.size


@dataclass
class FeatureMatrix:
    epsilon: np.ndarray  # n x p reconstruction errors


def jacobi_eigh(matrix, tol=1e-10, max_sweeps=100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps annihilate each off-diagonal entry in turn until the off-diagonal
    Frobenius norm falls below tol relative to the matrix norm (an absolute
    1e-10 is below float64 reach for price-scale covariances). Returns
    (eigenvalues, eigenvectors) sorted descending, eigenvectors as columns,
    each with its largest-magnitude component positive.
    """
    A = np.array(matrix, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, atol=1e-8 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    threshold = tol * scale
    # annihilating entries below skip makes no progress worth the rotation
    skip = threshold / max(n, 1) * 1e-2
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                new_p = c * A[:, p] - s * A[:, q]
                new_q = s * A[:, p] + c * A[:, q]
                A[:, p] = new_p
                A[:, q] = new_q
                new_p = c * A[p, :] - s * A[q, :]
                new_q = s * A[p, :] + c * A[q, :]
                A[p, :] = new_p
                A[q, :] = new_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                new_p = c * V[:, p] - s * V[:, q]
                new_q = s * V[:, p] + c * V[:, q]
                V[:, p] = new_p
                V[:, q] = new_q
    eigenvalues = np.diag(A).copy()
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    V = V[:, order]
    # deterministic sign: largest-magnitude component of each vector positive
    for j in range(n):
        lead = np.argmax(np.abs(V[:, j]))
        if V[lead, j] < 0:
            V[:, j] = -V[:, j]
    return eigenvalues, V


def fit_pca(X_train, k) -> PcaModel:
    """Fit the transfer matrix on training windows.

    Covariance uses 1/(n-1); columns are centered by the training means and
    the same means are reused at transform time.
    """
    X = np.asarray(X_train, dtype=float)
    if X.ndim != 2:
        raise ValueError("X_train must be 2-D")
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least two training rows")
    k = int(k)
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in 1..{p}, got {k}")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = jacobi_eigh(cov)
    eigenvalues = np.clip(eigenvalues, 0.0, None)  # covariance is PSD; clip round-off
    return PcaModel(mean=mean, omega=eigenvectors[:, :k].T.copy(),
                    eigenvalues=eigenvalues[:k].copy(), k=k)


def reconstruction_errors(model: PcaModel, X) -> FeatureMatrix:
    """epsilon = X_c (Omega^T Omega - I) on rows centered by the training means."""
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.window_length:
        raise ValueError(f"expected rows of length {model.window_length}, got {X.shape[1]}")
    centered = X - model.mean
    epsilon = (centered @ model.omega.T) @ model.omega - centered
    if squeeze:
        epsilon = epsilon[0]
    return FeatureMatrix(epsilon=epsilon)


def _f1(A, A_hat):
    A = np.asarray(A)
    A_hat = np.asarray(A_hat)
    tp = int(np.sum((A == 1) & (A_hat == 1)))
    fp = int(np.sum((A == 0) & (A_hat == 1)))
    fn = int(np.sum((A == 1) & (A_hat == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def calibrate_latent_dim(X_train, A_train, k_grid, tolerance=0.02):
    """Pick the latent dimension by sweeping the naive detector's train F1.

    One eigendecomposition serves every k: with Z = X_c V the naive score of a
    row at dimension k is sqrt(||x_c||^2 - sum_{j<=k} z_j^2), so the sweep only
    re-reads cumulative sums. Returns the smallest k whose F1 is within
    tolerance of the best (plateau rule).
    """
    X = np.asarray(X_train, dtype=float)
    A = np.asarray(A_train)
    if X.ndim != 2 or X.shape[0] != A.size:
        raise ValueError("X_train and A_train disagree on the number of rows")
    n, p = X.shape
    grid = sorted({int(k) for k in np.asarray(k_grid).ravel()})
    if not grid:
        raise ValueError("degenerate grid: no candidate dimensions")
    if grid[0] < 1 or grid[-1] > p:
        raise ValueError(f"degenerate grid: candidates must lie in 1..{p}")
    if not (np.any(A == 1) and np.any(A == 0)):
        raise ValueError("both classes required to calibrate")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    _, eigenvectors = jacobi_eigh(cov)
    projections = centered @ eigenvectors
    cumulative = np.cumsum(projections**2, axis=1)
    total = np.sum(centered**2, axis=1)
    f1_by_k = {}
    for k in grid:
        scores = np.sqrt(np.clip(total - cumulative[:, k - 1], 0.0, None))
        f_u = density.fit_kde(scores[A == 0])
        f_c = density.fit_kde(scores[A == 1])
        cut = density.intersection_cutoff(f_u, f_c).cutoff
        f1_by_k[k] = _f1(A, (scores > cut).astype(np.int64))
    best = max(f1_by_k.values())
    for k in grid:
        if f1_by_k[k] >= best - tolerance:
            return k
    return grid[-1]
