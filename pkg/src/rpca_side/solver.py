"""Multi-block ADMM for principal component pursuit with side information,
features and missing values, and all of its reductions.

The objective solved is::

    min ||H||_* + alpha ||B||_* + lambda ||W o E||_1
    s.t. X = U H V^T + E,   B = H - U^T S V

with ``L = U H V^T`` returned as the low-rank part.  Leaving out ``S`` (or
setting ``alpha = 0``) gives PCP with features; leaving out ``U``/``V``
treats them as identities without ever materializing them.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numerics
from .errors import MaskNotBinary, ShapeMismatch


class Model(str, enum.Enum):
    PCP = "PCP"
    PCPM = "PCPM"
    PCPF = "PCPF"
    PCPSM = "PCPSM"
    PCPSFM = "PCPSFM"
    LRR = "LRR"


@dataclass(frozen=True, eq=False)
class Problem:
    """One observation instance. ``U``/``V`` set to ``None`` mean identity."""

    X: np.ndarray
    W: np.ndarray
    S: Optional[np.ndarray]
    U: Optional[np.ndarray]
    V: Optional[np.ndarray]
    alpha: float
    lam: float
    model: Model

    @property
    def shape(self):
        return self.X.shape

    @property
    def d1(self) -> int:
        return self.X.shape[0] if self.U is None else self.U.shape[1]

    @property
    def d2(self) -> int:
        return self.X.shape[1] if self.V is None else self.V.shape[1]

    @property
    def fully_observed(self) -> bool:
        return bool(np.all(self.W == 1))

    def lift(self, H: np.ndarray) -> np.ndarray:
        """``U @ H @ V.T`` with identity semantics for absent features."""
        out = H if self.U is None else self.U @ H
        return out if self.V is None else out @ self.V.T

    def project(self, A: np.ndarray) -> np.ndarray:
        """``U.T @ A @ V`` with identity semantics for absent features."""
        out = A if self.U is None else self.U.T @ A
        return out if self.V is None else out @ self.V

    def side_core(self) -> np.ndarray:
        """``U.T @ S @ V``; zeros when there is no side information."""
        if self.S is None:
            return np.zeros((self.d1, self.d2))
        return self.project(self.S)


def default_lambda(n1: int, n2: int) -> float:
    if n1 < 1 or n2 < 1:
        raise ValueError("matrix dimensions must be positive")
    return 1.0 / math.sqrt(max(n1, n2))


def _derive_model(has_s, has_u, has_v, fully_observed) -> Model:
    if has_u or has_v:
        if has_s:
            return Model.PCPSFM
        return Model.LRR if (has_u and not has_v) else Model.PCPF
    if has_s:
        return Model.PCPSM
    return Model.PCP if fully_observed else Model.PCPM


def make_problem(X, W=None, S=None, U=None, V=None, alpha=0.0, lam=None,
                 orthonormalize_features=True) -> Problem:
    """Validate inputs, orthonormalize features and pick the model variant.

    ``W`` defaults to all ones and ``lam`` to ``default_lambda``.  Side
    information given together with ``alpha == 0`` is dropped with a
    warning, since it has no effect on the objective.
    """
    X = numerics.as_matrix(X)
    n1, n2 = X.shape
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or Inf")
    if W is None:
        W = np.ones_like(X)
    else:
        W = numerics.as_matrix(W)
        if W.shape != X.shape:
            raise ShapeMismatch(f"mask shape {W.shape} does not match X shape {X.shape}")
        if not np.all((W == 0) | (W == 1)):
            raise MaskNotBinary("mask entries must be 0 or 1")
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if S is not None:
        S = numerics.as_matrix(S)
        if S.shape != X.shape:
            raise ShapeMismatch(f"side information shape {S.shape} does not match X shape {X.shape}")
        if alpha == 0:
            warnings.warn("alpha = 0: side information ignored", stacklevel=2)
            S = None
    elif alpha != 0:
        raise ValueError("alpha must be 0 when no side information is given")
    if lam is None:
        lam = default_lambda(n1, n2)
    lam = float(lam)
    if not lam > 0:
        raise ValueError("lambda must be positive")

    if U is not None:
        U = numerics.as_matrix(U)
        if U.shape[0] != n1 or U.shape[1] > n1:
            raise ShapeMismatch(f"U shape {U.shape} incompatible with X shape {X.shape}")
        if orthonormalize_features:
            U = numerics.orthonormalize(U)
    if V is not None:
        V = numerics.as_matrix(V)
        if V.shape[0] != n2 or V.shape[1] > n2:
            raise ShapeMismatch(f"V shape {V.shape} incompatible with X shape {X.shape}")
        if orthonormalize_features:
            V = numerics.orthonormalize(V)

    fully = bool(np.all(W == 1))
    model = _derive_model(S is not None, U is not None, V is not None, fully)
    return Problem(X=X, W=W, S=S, U=U, V=V, alpha=alpha, lam=lam, model=model)


@dataclass(frozen=True)
class SolverConfig:
    """ADMM settings.

    ``h_update`` selects how the H-subproblem is solved: ``"exact"`` uses
    ``svt(U^T P V, 1/(2 mu))``, the true minimizer for orthonormal features;
    ``"literal"`` uses ``U^T svt(P, 1/(2 mu)) V``.  Both coincide when the
    features are identities or square.
    """

    beta: float = 1.1
    epsilon: float = 1e-7
    mu_max: float = 1e7
    max_iter: int = 1000
    mu0_scale: float = 1.0
    h_update: str = "exact"

    def __post_init__(self):
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.mu_max > 0 or not self.mu0_scale > 0:
            raise ValueError("mu_max and mu0_scale must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.h_update not in ("exact", "literal"):
            raise ValueError("h_update must be 'exact' or 'literal'")


@dataclass
class SolverState:
    H: np.ndarray
    B: np.ndarray
    E: np.ndarray
    Z: np.ndarray
    N: np.ndarray
    mu: float
    iter: int = 0
    r_primal: float = math.inf
    r_side: float = math.inf
    L: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, problem: Problem, mu: float) -> "SolverState":
        n1, n2 = problem.shape
        d1, d2 = problem.d1, problem.d2
        return cls(H=np.zeros((d1, d2)), B=np.zeros((d1, d2)), E=np.zeros((n1, n2)),
                   Z=np.zeros((n1, n2)), N=np.zeros((d1, d2)), mu=mu,
                   L=np.zeros((n1, n2)))


@dataclass
class SolveReport:
    L: np.ndarray
    E: np.ndarray
    H: np.ndarray
    converged: bool
    iterations: int
    residual_history: list = field(default_factory=list)
    model: Model = Model.PCPSFM

    @property
    def r_primal(self) -> float:
        return self.residual_history[-1][1] if self.residual_history else math.inf

    @property
    def r_side(self) -> float:
        return self.residual_history[-1][2] if self.residual_history else math.inf

    def rank(self, cutoff: float = numerics.RANK_CUTOFF) -> int:
        return numerics.numerical_rank(self.L, cutoff)

    def sparsity(self, tol: float = 0.0) -> float:
        """Fraction of entries of E with magnitude above ``tol``."""
        return float(np.count_nonzero(np.abs(self.E) > tol)) / self.E.size


def update_E(state: SolverState, problem: Problem) -> np.ndarray:
    R = problem.X - problem.lift(state.H) + state.Z / state.mu
    shrunk = numerics.shrink(R, problem.lam / state.mu)
    if problem.fully_observed:
        return shrunk
    return np.where(problem.W == 1, shrunk, R)


def update_H(state: SolverState, problem: Problem, D: Optional[np.ndarray] = None,
             mode: str = "exact") -> np.ndarray:
    """Minimize the augmented Lagrangian over H, using the current E, B, Z, N."""
    if D is None:
        D = problem.side_core()
    mu = state.mu
    A = problem.X - state.E + state.Z / mu
    C = state.B + D - state.N / mu
    if mode == "exact" or (problem.U is None and problem.V is None):
        return numerics.svt(0.5 * (problem.project(A) + C), 0.5 / mu)
    P = 0.5 * (A + problem.lift(C))
    return problem.project(numerics.svt(P, 0.5 / mu))


def update_B(state: SolverState, problem: Problem, D: Optional[np.ndarray] = None) -> np.ndarray:
    if D is None:
        D = problem.side_core()
    Q = state.H - D + state.N / state.mu
    return numerics.svt(Q, problem.alpha / state.mu)


def update_multipliers(state: SolverState, problem: Problem, D: Optional[np.ndarray] = None,
                       L: Optional[np.ndarray] = None):
    if D is None:
        D = problem.side_core()
    if L is None:
        L = problem.lift(state.H)
    Z = state.Z + state.mu * (problem.X - state.E - L)
    N = state.N + state.mu * (state.H - state.B - D)
    return Z, N


def solve(problem: Problem, config: SolverConfig = SolverConfig(),
          callback: Optional[Callable[[SolverState], None]] = None) -> SolveReport:
    """Run the ADMM iteration E -> H -> B -> (Z, N) -> mu with continuation.

    Stops when both normalized feasibility residuals fall below
    ``config.epsilon`` or after ``config.max_iter`` iterations; running out
    of iterations is reported through ``converged=False``.  ``callback``
    receives the live state after every iteration.
    """
    X = problem.X
    x_fro = float(np.linalg.norm(X, "fro"))
    if x_fro == 0.0:
        zeros = np.zeros_like(X)
        return SolveReport(L=zeros, E=zeros.copy(), H=np.zeros((problem.d1, problem.d2)),
                           converged=True, iterations=0, residual_history=[], model=problem.model)

    mu = config.mu0_scale / numerics.spectral_norm(X)
    state = SolverState.initial(problem, mu)
    D = problem.side_core()
    history = []
    converged = False
    for k in range(1, config.max_iter + 1):
        state.iter = k
        state.E = update_E(state, problem)
        state.H = update_H(state, problem, D, config.h_update)
        state.B = update_B(state, problem, D)
        state.L = problem.lift(state.H)
        primal = X - state.E - state.L
        side = state.H - state.B - D
        state.Z = state.Z + state.mu * primal
        state.N = state.N + state.mu * side
        state.r_primal = float(np.linalg.norm(primal, "fro")) / x_fro
        state.r_side = float(np.linalg.norm(side, "fro")) / x_fro
        history.append((k, state.r_primal, state.r_side, state.mu))
        if callback is not None:
            callback(state)
        if max(state.r_primal, state.r_side) < config.epsilon:
            converged = True
            break
        state.mu = min(state.mu * config.beta, config.mu_max)

    return SolveReport(L=state.L, E=state.E, H=state.H, converged=converged,
                       iterations=state.iter, residual_history=history, model=problem.model)
