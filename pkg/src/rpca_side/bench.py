"""Recovery metrics and phase-transition sweeps over (rank, error density)."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from . import solver, synth
from .errors import ShapeMismatch, TooSmall, ZeroReference

METHODS = ("PCP", "PCPM", "PCPSM", "PCPF", "PCPSFM", "LRR")


def rel_error(L, L0) -> float:
    """Relative Frobenius error ``||L - L0||_F / ||L0||_F``."""
    L = np.asarray(L, dtype=np.float64)
    L0 = np.asarray(L0, dtype=np.float64)
    if L.shape != L0.shape:
        raise ShapeMismatch(f"shapes differ: {L.shape} vs {L0.shape}")
    ref = np.linalg.norm(L0)
    if ref == 0:
        raise ZeroReference("reference matrix is zero")
    return float(np.linalg.norm(L - L0) / ref)


def psnr(A, B, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeMismatch(f"shapes differ: {A.shape} vs {B.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((A - B) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def ssim(A, B, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03,
         dynamic_range: Optional[float] = None) -> float:
    """Mean structural similarity over Gaussian-weighted windows.

    Local statistics use an ``window x window`` Gaussian of width ``sigma``;
    the map is averaged over positions where the window fits entirely inside
    the image.  ``dynamic_range`` defaults to the value range of ``A``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeMismatch(f"shapes differ: {A.shape} vs {B.shape}")
    if A.ndim != 2:
        raise ValueError("ssim expects 2-D images")
    if min(A.shape) < window:
        raise TooSmall(f"image {A.shape} smaller than the {window}x{window} window")
    if dynamic_range is None:
        dynamic_range = float(A.max() - A.min()) or 1.0
    radius = (window - 1) // 2
    blur = lambda img: ndimage.gaussian_filter(img, sigma, mode="reflect", truncate=radius / sigma)
    ua, ub = blur(A), blur(B)
    vaa = blur(A * A) - ua * ua
    vbb = blur(B * B) - ub * ub
    vab = blur(A * B) - ua * ub
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    smap = ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua**2 + ub**2 + c1) * (vaa + vbb + c2))
    inner = smap[radius:A.shape[0] - radius, radius:A.shape[1] - radius]
    return float(inner.mean())


def frame_metrics(L, L0, height: int, width: int, peak: float = 1.0) -> dict:
    """PSNR over a whole column stack and SSIM averaged over its frames."""
    L = np.asarray(L, dtype=np.float64)
    L0 = np.asarray(L0, dtype=np.float64)
    frames = [ssim(L0[:, k].reshape(height, width), L[:, k].reshape(height, width),
                   dynamic_range=peak) for k in range(L.shape[1])]
    return {"psnr": psnr(L0, L, peak), "ssim": float(np.mean(frames))}


@dataclass(frozen=True)
class PhaseConfig:
    ranks: Sequence[int] = (10, 20, 30, 40, 50, 60)
    densities: Sequence[float] = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)
    trials_per_cell: int = 3
    sign_mode: str = "random"
    observed_fraction: float = 1.0
    methods: Sequence[str] = ("PCP", "PCPSM", "PCPF", "PCPSFM")
    success_threshold: float = 1e-3
    base_seed: int = 0
    n1: int = 200
    n2: int = 200
    d: int = 10
    alpha: float = 0.2
    lam: Optional[float] = None
    solver: solver.SolverConfig = field(default_factory=solver.SolverConfig)

    def __post_init__(self):
        if not self.ranks or not self.densities:
            raise ValueError("ranks and densities must be non-empty")
        if list(self.ranks) != sorted(self.ranks) or list(self.densities) != sorted(self.densities):
            raise ValueError("ranks and densities must be sorted")
        if any(not 0 < rho < 1 for rho in self.densities):
            raise ValueError("densities must lie in (0, 1)")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")
        if not 0 < self.observed_fraction <= 1:
            raise ValueError("observed_fraction must lie in (0, 1]")
        unknown = set(m.upper() for m in self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        synth.SignMode(self.sign_mode)


@dataclass
class PhaseGrid:
    """Trial errors keyed by method, indexed ``[rank_index][density_index]``."""

    ranks: list
    densities: list
    methods: list
    threshold: float
    errors: dict

    def success(self, method: str) -> np.ndarray:
        errs = self.errors[method]
        return np.array([[all(e < self.threshold for e in cell) for cell in row] for row in errs])

    def success_cells(self, method: str) -> set:
        ok = self.success(method)
        return {(self.ranks[i], self.densities[j]) for i, j in zip(*np.nonzero(ok))}

    def rows(self):
        for m in self.methods:
            for i, r in enumerate(self.ranks):
                for j, rho in enumerate(self.densities):
                    for t, e in enumerate(self.errors[m][i][j]):
                        yield m, r, rho, t, e, e < self.threshold

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "rank", "density", "trial", "rel_error", "success"])
            for m, r, rho, t, e, ok in self.rows():
                w.writerow([m, r, repr(float(rho)), t, repr(float(e)), int(ok)])

    def summary(self) -> dict:
        return {
            "ranks": list(self.ranks),
            "densities": list(self.densities),
            "threshold": self.threshold,
            "success": {m: self.success(m).astype(int).tolist() for m in self.methods},
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def cell_seed(base_seed: int, rank: int, density: float, trial: int) -> np.random.SeedSequence:
    """Seed for one trial: SeedSequence hashing of (base_seed; rank, density in ppm, trial).

    Independent of the method, so all methods see the identical instance.
    """
    return np.random.SeedSequence(base_seed, spawn_key=(rank, int(round(density * 1e6)), trial))


def _method_problem(method: str, inst: synth.SyntheticInstance, alpha: float, lam):
    method = method.upper()
    kw = {}
    if method in ("PCPSM", "PCPSFM"):
        kw.update(S=inst.S, alpha=alpha)
    if method in ("PCPF", "PCPSFM"):
        kw.update(U=inst.U, V=inst.V)
    if method == "LRR":
        kw.update(U=inst.U)
    return solver.make_problem(inst.X, W=inst.W, lam=lam, orthonormalize_features=False, **kw)


def _run_trial(cfg: PhaseConfig, rank: int, density: float, trial: int) -> dict:
    seed = cell_seed(cfg.base_seed, rank, density, trial)
    out = {}
    try:
        inst = synth.make_instance(cfg.n1, cfg.n2, rank, density, cfg.sign_mode, d=cfg.d,
                                   missing=1.0 - cfg.observed_fraction, seed=seed)
    except Exception:
        return {m: math.inf for m in cfg.methods}
    for m in cfg.methods:
        try:
            rep = solver.solve(_method_problem(m, inst, cfg.alpha, cfg.lam), cfg.solver)
            out[m] = rel_error(rep.L, inst.L0) if rep.converged else math.inf
        except Exception:
            out[m] = math.inf
    return out


def run_phase(config: PhaseConfig, workers: int = 1, progress=None) -> PhaseGrid:
    """Sweep every (rank, density, trial), solving each instance with every method.

    Failed or non-converged solves score ``inf``.  Results are assembled by
    key, so the grid is the same for any ``workers`` count.
    """
    jobs = [(r, rho, t) for r in config.ranks for rho in config.densities
            for t in range(config.trials_per_cell)]
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {job: pool.submit(_run_trial, config, *job) for job in jobs}
            for job, fut in futs.items():
                results[job] = fut.result()
                if progress:
                    progress(job, results[job])
    else:
        for job in jobs:
            results[job] = _run_trial(config, *job)
            if progress:
                progress(job, results[job])
    methods = list(config.methods)
    errors = {m: [[[results[(r, rho, t)][m] for t in range(config.trials_per_cell)]
                   for rho in config.densities] for r in config.ranks] for m in methods}
    return PhaseGrid(list(config.ranks), list(config.densities), methods,
                     config.success_threshold, errors)
