"""K-SVD dictionary learning with orthogonal matching pursuit coding.

Used to learn feature bases for data with no known column/row space:
``U`` from the observation matrix and ``V`` from its transpose.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics, synth
from .errors import DegenerateInput

DUPLICATE_COHERENCE = 0.99


@dataclass
class Dictionary:
    D: np.ndarray
    B: np.ndarray
    t: int
    history: list = field(default_factory=list)


def omp(D: np.ndarray, x: np.ndarray, t: int, tol: float = 1e-10) -> np.ndarray:
    """Greedy orthogonal matching pursuit with at most ``t`` atoms.

    Stops after ``t`` selections or once the residual norm falls below
    ``tol * ||x||``.  The returned code is the least-squares fit of ``x``
    on the selected atoms, so the residual is orthogonal to all of them.
    """
    D = np.asarray(D, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64).ravel()
    n, c = D.shape
    code = np.zeros(c)
    xnorm = np.linalg.norm(x)
    if xnorm == 0 or t <= 0:
        return code
    support: list[int] = []
    Q = np.empty((n, 0))
    r = x.copy()
    for _ in range(min(t, c, n)):
        rnorm = np.linalg.norm(r)
        if rnorm < tol * xnorm:
            break
        corr = np.abs(D.T @ r)
        corr[support] = -1.0
        k = int(np.argmax(corr))
        if corr[k] <= tol * rnorm:
            break
        q = D[:, k].copy()
        for _ in range(2):
            q -= Q @ (Q.T @ q)
        qn = np.linalg.norm(q)
        if qn < 1e-10:
            # atom already in the span of the selection
            break
        Q = np.column_stack([Q, q / qn])
        support.append(k)
        r = x - Q @ (Q.T @ x)
    if support:
        coef, *_ = np.linalg.lstsq(D[:, support], x, rcond=None)
        code[support] = coef
    return code


def sparse_code(D: np.ndarray, M: np.ndarray, t: int) -> np.ndarray:
    """OMP code for every column of ``M``."""
    return np.column_stack([omp(D, M[:, j], t) for j in range(M.shape[1])])


def initial_dictionary(M: np.ndarray, c: int, seed=0) -> np.ndarray:
    """``c`` distinct normalized training columns, topped up with random unit vectors."""
    g = synth.rng(seed)
    n, m = M.shape
    D = np.empty((n, c))
    picks = g.permutation(m)[:c]
    for k in range(c):
        col = M[:, picks[k]] if k < picks.size else np.zeros(n)
        norm = np.linalg.norm(col)
        if norm == 0:
            col = g.standard_normal(n)
            norm = np.linalg.norm(col)
        D[:, k] = col / norm
    return D


def update_atoms(D: np.ndarray, B: np.ndarray, M: np.ndarray):
    """One sweep of rank-1 atom updates. Returns new ``(D, B)`` and the unused atoms."""
    D = D.copy()
    B = B.copy()
    unused = []
    for k in range(D.shape[1]):
        users = np.flatnonzero(B[k])
        if users.size == 0:
            unused.append(k)
            continue
        Ek = M[:, users] - D @ B[:, users] + np.outer(D[:, k], B[k, users])
        f = numerics.svd(Ek)
        D[:, k] = f.left[:, 0]
        B[k, users] = f.singular_values[0] * f.right[:, 0]
    return D, B, unused


def _replace_atoms(D, B, M, candidates):
    """Swap out unused or near-duplicate atoms for poorly represented training columns."""
    D = D.copy()
    gram = np.abs(D.T @ D)
    np.fill_diagonal(gram, 0.0)
    dup = {k for k in range(D.shape[1]) if np.any(gram[k, :k] > DUPLICATE_COHERENCE)}
    targets = sorted(set(candidates) | dup)
    if not targets:
        return D, []
    err = np.linalg.norm(M - D @ B, axis=0)
    order = [j for j in np.argsort(-err, kind="stable") if np.linalg.norm(M[:, j]) > 0]
    replaced = []
    for k, j in zip(targets, order):
        D[:, k] = M[:, j] / np.linalg.norm(M[:, j])
        replaced.append(k)
    return D, replaced


def ksvd_learn(M, c: int = 40, t: int = 40, iterations: int = 10, seed=0) -> Dictionary:
    """Learn ``D`` (unit-norm atoms) and codes ``B`` minimizing ``||M - D B||_F``.

    Each iteration codes all columns with OMP and then updates atoms one
    by one.  A column keeps its previous code when that code still fits
    better, so the recorded error never increases unless a near-duplicate
    atom had to be replaced.
    """
    M = numerics.as_matrix(M)
    if not np.any(M):
        raise DegenerateInput("training matrix is zero")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if c < 1 or t < 1:
        raise ValueError("c and t must be positive")
    D = initial_dictionary(M, c, seed)
    B_prev = None
    unused: list = []
    history = []
    for _ in range(iterations):
        if B_prev is not None:
            D, replaced = _replace_atoms(D, B_prev, M, unused)
            if replaced:
                B_prev = B_prev.copy()
                stale = np.any(B_prev[replaced] != 0, axis=0)
                B_prev[:, stale] = 0.0
        B = sparse_code(D, M, t)
        if B_prev is not None:
            new_err = np.linalg.norm(M - D @ B, axis=0)
            old_err = np.linalg.norm(M - D @ B_prev, axis=0)
            keep = old_err < new_err
            B[:, keep] = B_prev[:, keep]
        D, B, unused = update_atoms(D, B, M)
        history.append(float(np.linalg.norm(M - D @ B)))
        B_prev = B
    return Dictionary(D=D, B=B, t=t, history=history)


def ksvd_features(X, c: int = 40, t: int = 40, iterations: int = 10, seed=0):
    """Orthonormal features from dictionaries of ``X`` (for U) and ``X.T`` (for V)."""
    X = numerics.as_matrix(X)
    su, sv = synth.child_seeds(seed, 2)
    U = numerics.orthonormalize(ksvd_learn(X, min(c, X.shape[0]), t, iterations, su).D)
    V = numerics.orthonormalize(ksvd_learn(X.T, min(c, X.shape[1]), t, iterations, sv).D)
    return U, V
