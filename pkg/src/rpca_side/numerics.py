"""Dense matrix primitives: SVD, norms, orthonormalization and the two
proximal operators (soft thresholding and singular value thresholding).

All functions are pure and operate on float64 ``numpy`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, RankDeficient

RANK_CUTOFF = 1e-10
PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def _svd_raw(A: np.ndarray):
    """Thin SVD through LAPACK; divide-and-conquer first, QR iteration as fallback."""
    try:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        pass
    try:
        return scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD failed for matrix of shape {A.shape}: {exc}") from exc


def svd(A) -> SvdFactors:
    """Thin SVD with a reproducible sign convention.

    Singular values are non-increasing. Each left singular vector is flipped
    so that its first entry that is not negligibly small is non-negative; the
    matching right vector is flipped with it.
    """
    A = as_matrix(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("svd input contains NaN or Inf")
    if A.size == 0:
        k = min(A.shape)
        return SvdFactors(np.zeros((A.shape[0], k)), np.zeros(k), np.zeros((A.shape[1], k)))
    M, s, Yt = _svd_raw(A)
    Y = Yt.T.copy()
    M = M.copy()
    for j in range(M.shape[1]):
        col = M[:, j]
        big = np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            M[:, j] = -col
            Y[:, j] = -Y[:, j]
    return SvdFactors(M, s, Y)


def singular_values(A) -> np.ndarray:
    A = as_matrix(A)
    if A.size == 0:
        return np.zeros(0)
    try:
        return scipy.linalg.svdvals(A, check_finite=False)
    except np.linalg.LinAlgError:
        return _svd_raw(A)[1]


def shrink(A, tau: float) -> np.ndarray:
    """Elementwise soft threshold ``sgn(a) * max(|a| - tau, 0)``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    A = np.asarray(A, dtype=np.float64)
    return np.sign(A) * np.maximum(np.abs(A) - tau, 0.0)


def svt(A, tau: float) -> np.ndarray:
    """Singular value thresholding: the proximal map of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    A = as_matrix(A)
    if A.size == 0 or tau == 0:
        # prox of the zero function is the identity
        return A.copy()
    M, s, Yt = _svd_raw(A)
    s = s - tau
    k = int(np.count_nonzero(s > 0))
    if k == 0:
        return np.zeros_like(A)
    return (M[:, :k] * s[:k]) @ Yt[:k, :]


def norms(A) -> dict:
    """Frobenius, entrywise l1, nuclear and spectral norms."""
    A = as_matrix(A)
    s = singular_values(A)
    return {
        "fro": float(np.linalg.norm(A, "fro")),
        "l1": float(np.abs(A).sum()),
        "nuclear": float(s.sum()),
        "spectral": float(s[0]) if s.size else 0.0,
    }


def nuclear_norm(A) -> float:
    return float(singular_values(A).sum())


def spectral_norm(A) -> float:
    s = singular_values(A)
    return float(s[0]) if s.size else 0.0


def numerical_rank(A, cutoff: float = RANK_CUTOFF) -> int:
    """Count singular values at or above ``cutoff * sigma_1``."""
    s = singular_values(A)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s >= cutoff * s[0]))


def orthonormalize(M, tol: float = PIVOT_TOL) -> np.ndarray:
    """Orthonormal basis for the column span of ``M`` by Gram-Schmidt.

    Classical Gram-Schmidt applied twice per column (CGS2), so ``Q.T @ Q``
    is the identity to working precision. Raises
    ``RankDeficient`` when a column's remaining norm drops below
    ``tol`` times the largest input column norm.
    """
    M = as_matrix(M)
    n, d = M.shape
    if d > n:
        raise RankDeficient(f"{d} columns cannot be independent in dimension {n}")
    scale = np.linalg.norm(M, axis=0).max() if d else 0.0
    if d and scale == 0:
        raise RankDeficient("matrix is zero")
    Q = np.empty_like(M)
    for j in range(d):
        v = M[:, j].copy()
        for _ in range(2):
            v -= Q[:, :j] @ (Q[:, :j].T @ v)
        nv = np.linalg.norm(v)
        if nv < tol * scale:
            raise RankDeficient(f"column {j} is linearly dependent on the preceding columns")
        Q[:, j] = v / nv
    return Q
