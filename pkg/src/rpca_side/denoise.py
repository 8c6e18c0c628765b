"""Image-sequence denoising: tiled-mean side information, learned features, solve."""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import ksvd, solver


def tiled_mean(X: np.ndarray, W: Optional[np.ndarray] = None) -> np.ndarray:
    """Average frame (over observed pixels only) repeated in every column."""
    if W is None:
        W = np.ones_like(X)
    counts = W.sum(axis=1, keepdims=True)
    mean = (X * W).sum(axis=1, keepdims=True) / np.maximum(counts, 1)
    return np.repeat(mean, X.shape[1], axis=1)


def build_problem(X, W=None, side=None, features=None, alpha: float = 0.5, lam=None,
                  ksvd_atoms: int = 40, ksvd_sparsity: int = 40, ksvd_iters: int = 10,
                  seed=0) -> solver.Problem:
    """Assemble the problem for a column stack.

    ``side`` is ``"mean"``, a matrix, or ``None``; ``features`` is
    ``"ksvd"``, a ``(U, V)`` pair (either may be ``None``), or ``None``.
    """
    X = np.asarray(X, dtype=np.float64)
    if isinstance(side, str):
        if side != "mean":
            raise ValueError(f"unknown side-information mode {side!r}")
        S = tiled_mean(X, W)
    else:
        S = side
    if S is None:
        alpha = 0.0
    U = V = None
    if isinstance(features, str):
        if features != "ksvd":
            raise ValueError(f"unknown feature mode {features!r}")
        U, V = ksvd.ksvd_features(X, ksvd_atoms, ksvd_sparsity, ksvd_iters, seed)
    elif features is not None:
        U, V = features
    return solver.make_problem(X, W=W, S=S, U=U, V=V, alpha=alpha, lam=lam)
