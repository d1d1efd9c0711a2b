"""Gaussian kernel utilities shared by the scoring, search and diagnostic code.

All sample blocks are (n, d) arrays with one row per observation; 1-D inputs
are treated as a single column.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

BANDWIDTH_BOUNDS = (0.1, 10.0)
NOISE_BOUNDS = (0.001, 10.0)


class FactorizationError(RuntimeError):
    """Cholesky factorization failed even after the jitter escalation."""


def as_block(values):
    """Coerce input to a float (n, d) sample block."""
    block = np.asarray(values, dtype=float)
    if block.ndim == 1:
        block = block[:, None]
    if block.ndim != 2 or block.shape[0] == 0:
        raise ValueError("sample block must be a non-empty 1-D or 2-D array")
    return block


def gaussian_kernel(u, v, sigma):
    """k(u, v) = exp(-||u - v||^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    diff = np.asarray(u, dtype=float).ravel() - np.asarray(v, dtype=float).ravel()
    return float(np.exp(-diff @ diff / (2.0 * sigma**2)))


def sq_distances(block):
    """Dense matrix of pairwise squared Euclidean distances."""
    block = as_block(block)
    d2 = cdist(block, block, "sqeuclidean")
    np.fill_diagonal(d2, 0.0)
    return d2


def kernel_matrix(block, sigma):
    """Gaussian kernel matrix of a sample block.

    The result is symmetric with unit diagonal and entries in (0, 1].
    """
    if sigma <= 0:
        raise ValueError(f"bandwidth must be positive, got {sigma}")
    return np.exp(sq_distances(block) / (-2.0 * sigma**2))


def kernel_matrix_from_sq(d2, sigma):
    """Kernel matrix from a precomputed squared-distance matrix."""
    return np.exp(d2 / (-2.0 * sigma**2))


def kernel_derivative(block, sigma, j, i):
    """Gradient of k(x^j, x^i) with respect to the sample x^j.

    Returns the length-d vector k(x^j, x^i) * (x^i - x^j) / sigma^2; it
    vanishes when i == j.
    """
    block = as_block(block)
    n = block.shape[0]
    if not (0 <= j < n and 0 <= i < n):
        raise ValueError(f"sample indices ({j}, {i}) out of range for n={n}")
    diff = block[i] - block[j]
    return gaussian_kernel(block[j], block[i], sigma) * diff / sigma**2


def median_pairwise_distance(block):
    """Plain median of the pairwise Euclidean distances (no doubling, no clamp)."""
    block = as_block(block)
    if block.shape[0] < 2:
        raise ValueError("need at least two samples to compute pairwise distances")
    return float(np.median(pdist(block)))


def median_heuristic(block, bounds=BANDWIDTH_BOUNDS):
    """Bandwidth heuristic: twice the median pairwise distance, boxed to bounds.

    Identical samples give a zero median and therefore the lower bound.
    """
    lo, hi = bounds
    return float(np.clip(2.0 * median_pairwise_distance(block), lo, hi))


def chol_factor_logdet(K):
    """Cholesky factor and log-determinant of an SPD matrix.

    A plain factorization is attempted first; on failure a jitter eps*I is
    added, with eps escalating from 1e-8 to 1e-2 times the mean diagonal.
    Raises FactorizationError when even the largest jitter fails.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("matrix must be square")
    diag_mean = float(np.mean(np.diag(K)))
    scale = diag_mean if diag_mean > 0 else 1.0
    jitters = [0.0] + [10.0**e * scale for e in range(-8, -1)]
    for eps in jitters:
        target = K if eps == 0.0 else K + eps * np.eye(K.shape[0])
        try:
            factor = cho_factor(target, lower=True)
        except np.linalg.LinAlgError:
            continue
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        return factor, logdet
    raise FactorizationError(
        f"matrix of size {K.shape[0]} is not positive definite even with jitter"
    )


def chol_solve_logdet(K, rhs):
    """Solve K x = rhs via Cholesky and return (x, logdet K).

    Uses the same jitter escalation as chol_factor_logdet when K is not
    numerically positive definite.
    """
    rhs = np.asarray(rhs, dtype=float)
    factor, logdet = chol_factor_logdet(K)
    return cho_solve(factor, rhs), logdet
