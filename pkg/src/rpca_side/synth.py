"""Seeded synthetic data: low-rank matrices, sparse corruptions, feature
bases, noisy side information and occlusion masks.

Every generator takes a ``seed`` (an int or a ``numpy.random.SeedSequence``)
and draws from a PCG64 stream, so outputs are a pure function of
parameters and seed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .errors import DimensionOverflow, MissingL0


class SignMode(str, enum.Enum):
    RANDOM = "random"
    COHERENT = "coherent"


def rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def child_seeds(seed, n: int) -> list:
    """``n`` independent child seeds; unlike ``SeedSequence.spawn`` this never mutates ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    key = tuple(ss.spawn_key)
    return [np.random.SeedSequence(ss.entropy, spawn_key=key + (i,)) for i in range(n)]


def _count(fraction: float, total: int) -> int:
    # round half up, independent of Python's banker's rounding
    return int(np.floor(fraction * total + 0.5))


def gen_low_rank(n1: int, n2: int, r: int, variance: float = 5e-3, seed=0):
    """``L0 = J @ K.T`` with ``J`` (n1 x r) and ``K`` (n2 x r) i.i.d. N(0, variance)."""
    if r < 0 or r > min(n1, n2):
        raise ValueError(f"rank {r} must lie in [0, min(n1, n2) = {min(n1, n2)}]")
    if not variance > 0:
        raise ValueError("variance must be positive")
    g = rng(seed)
    std = np.sqrt(variance)
    J = g.standard_normal((n1, r)) * std
    K = g.standard_normal((n2, r)) * std
    return J @ K.T, J, K


def gen_sparse_errors(n1: int, n2: int, rho: float, sign_mode=SignMode.RANDOM,
                      L0: Optional[np.ndarray] = None, seed=0) -> np.ndarray:
    """Error matrix with exactly ``round(rho * n1 * n2)`` entries on a uniform support.

    Values are +-1 with equal probability, or ``sgn(L0)`` on the support in
    coherent mode.
    """
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    sign_mode = SignMode(sign_mode)
    if sign_mode is SignMode.COHERENT and L0 is None:
        raise MissingL0("coherent sign mode needs L0")
    g = rng(seed)
    total = n1 * n2
    support = g.choice(total, size=_count(rho, total), replace=False)
    E = np.zeros(total)
    if sign_mode is SignMode.RANDOM:
        E[support] = g.choice(np.array([-1.0, 1.0]), size=support.size)
    else:
        E[support] = np.sign(np.asarray(L0, dtype=np.float64).ravel()[support])
    return E.reshape(n1, n2)


def _pad_basis(basis: np.ndarray, d: int, g: np.random.Generator) -> np.ndarray:
    """Append ``d`` random orthonormal directions orthogonal to ``basis``, then shuffle columns."""
    n, r = basis.shape
    extra = g.standard_normal((n, d))
    Q = numerics.orthonormalize(np.hstack([basis, extra]))
    # keep the original singular vectors exactly; only the new columns come from Q
    full = np.hstack([basis, Q[:, r:]])
    return full[:, g.permutation(r + d)]


def gen_features(L0: np.ndarray, d: int = 10, seed=0, rank: Optional[int] = None):
    """Feature bases containing the column and row spaces of ``L0``.

    ``U`` interleaves the left singular vectors of ``L0`` with ``d`` random
    orthonormal vectors from the orthogonal complement; ``V`` does the same
    with the right singular vectors.
    """
    L0 = numerics.as_matrix(L0)
    n1, n2 = L0.shape
    if d < 0:
        raise ValueError("d must be non-negative")
    r = numerics.numerical_rank(L0) if rank is None else rank
    if r + d > min(n1, n2):
        raise DimensionOverflow(f"rank {r} + d {d} exceeds min dimension {min(n1, n2)}")
    g = rng(seed)
    f = numerics.svd(L0)
    U = _pad_basis(f.left[:, :r], d, g)
    V = _pad_basis(f.right[:, :r], d, g)
    return U, V


def side_noise_variance(r: int) -> float:
    """Per-entry noise variance giving about 1% Frobenius error on ``L0``."""
    return 2.5 * r * 1e-9


def gen_side_info(L0: np.ndarray, r: int, seed=0, variance: Optional[float] = None) -> np.ndarray:
    if variance is None:
        if r < 1:
            raise ValueError("rank must be at least 1 to set the noise scale")
        variance = side_noise_variance(r)
    if variance < 0:
        raise ValueError("variance must be non-negative")
    L0 = numerics.as_matrix(L0)
    if variance == 0:
        return L0.copy()
    g = rng(seed)
    return L0 + g.standard_normal(L0.shape) * np.sqrt(variance)


def gen_mask(n1: int, n2: int, missing_fraction: float = 0.0, seed=0) -> np.ndarray:
    """Binary mask with exactly ``round(missing_fraction * n1 * n2)`` zeros."""
    if not 0 <= missing_fraction <= 1:
        raise ValueError("missing_fraction must lie in [0, 1]")
    g = rng(seed)
    total = n1 * n2
    W = np.ones(total)
    W[g.choice(total, size=_count(missing_fraction, total), replace=False)] = 0.0
    return W.reshape(n1, n2)


@dataclass(eq=False)
class SyntheticInstance:
    L0: np.ndarray
    E0: np.ndarray
    X: np.ndarray
    W: np.ndarray
    S: np.ndarray
    U: np.ndarray
    V: np.ndarray
    r: int
    rho: float
    seed: object


def make_instance(n1: int = 200, n2: int = 200, r: int = 10, rho: float = 0.05,
                  sign_mode=SignMode.RANDOM, d: int = 10, missing: float = 0.0,
                  side_variance: Optional[float] = None, variance: float = 5e-3,
                  seed=0) -> SyntheticInstance:
    """Build every piece of one synthetic trial from independent child streams.

    ``side_variance=None`` uses the 1%-error construction; pass 0 for
    perfect side information.  Unobserved entries of ``X`` are zeroed.
    """
    s_low, s_err, s_feat, s_side, s_mask = child_seeds(seed, 5)
    L0, _, _ = gen_low_rank(n1, n2, r, variance, s_low)
    E0 = gen_sparse_errors(n1, n2, rho, sign_mode, L0, s_err)
    U, V = gen_features(L0, d, s_feat, rank=r)
    if side_variance is None and r == 0:
        side_variance = 0.0
    S = gen_side_info(L0, r, s_side, variance=side_variance)
    W = gen_mask(n1, n2, missing, s_mask)
    X = (L0 + E0) * W
    return SyntheticInstance(L0=L0, E0=E0, X=X, W=W, S=S, U=U, V=V, r=r, rho=rho, seed=seed)


def calibration_instance(seed=0) -> SyntheticInstance:
    """200x200 rank-10 instance with 5% +-1 errors, ``S = L0`` and exact singular-vector features."""
    return make_instance(200, 200, 10, 0.05, SignMode.RANDOM, d=0, missing=0.0,
                         side_variance=0.0, seed=seed)


def gen_frame_sequence(height: int = 32, width: int = 32, frames: int = 64, rank: int = 8,
                       error_fraction: float = 0.05, missing_fraction: float = 0.05, seed=0):
    """Synthetic image sequence: smooth rank-``rank`` frames plus salt-and-pepper defects.

    Each frame is a non-negative mix of ``rank`` smooth basis images
    (Gaussian blobs modulated by a cosine shading), scaled into [0, 0.9].
    A random ``error_fraction`` of pixels is replaced by 0 or 1 and a
    disjoint random ``missing_fraction`` is masked out.

    Returns ``(L0, E0, X, W)`` with pixels stacked row-by-row per column.
    """
    s_basis, s_coef, s_err = child_seeds(seed, 3)
    g = rng(s_basis)
    yy, xx = np.mgrid[0:height, 0:width]
    yy = yy / max(height - 1, 1)
    xx = xx / max(width - 1, 1)
    basis = []
    for k in range(rank):
        cy, cx = g.uniform(0.25, 0.75, size=2)
        sy, sx = g.uniform(0.15, 0.4, size=2)
        ky, kx = g.uniform(-2.0, 2.0, size=2)
        blob = np.exp(-((yy - cy) ** 2) / (2 * sy**2) - ((xx - cx) ** 2) / (2 * sx**2))
        shade = 0.5 + 0.5 * np.cos(np.pi * (ky * yy + kx * xx))
        basis.append((blob * shade).ravel())
    Bmat = np.stack(basis, axis=1)
    coef = rng(s_coef).uniform(0.0, 1.0, size=(rank, frames))
    L0 = Bmat @ coef
    L0 = 0.9 * L0 / L0.max()

    n1 = height * width
    total = n1 * frames
    ge = rng(s_err)
    picks = ge.choice(total, size=_count(error_fraction + missing_fraction, total), replace=False)
    n_err = _count(error_fraction, total)
    err_idx, miss_idx = picks[:n_err], picks[n_err:]
    corrupted = L0.ravel().copy()
    corrupted[err_idx] = ge.choice(np.array([0.0, 1.0]), size=n_err)
    X = corrupted.reshape(n1, frames)
    E0 = X - L0
    W = np.ones(total)
    W[miss_idx] = 0.0
    W = W.reshape(n1, frames)
    return L0, E0, X * W, W
