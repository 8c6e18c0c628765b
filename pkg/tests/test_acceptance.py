"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary (see conftest.py), or
directly when this file is run as a script.
"""
import contextlib
import glob
import hashlib
import json
import os
import shutil
import time
import warnings

import numpy as np
import pytest

from rpca_side import bench, denoise, ksvd, numerics, solver, synth
from rpca_side.cli import main as cli_main
from rpca_side.solver import SolverConfig, make_problem, solve

from acceptance_log import record
from oracles import prox_grad_pcp, reduced_pcp_path, shrink_loop, tiny_pcp_instance

EPS = 1e-7
# (label, converged, r_primal, r_side) for every run in criteria 1-4
RUNS = []


def keep(label, rep):
    RUNS.append((label, rep.converged, rep.r_primal, rep.r_side))
    return rep


@contextlib.contextmanager
def recording_solves(label):
    """Record the residuals of every solve made through the solver module."""
    real = solver.solve

    def wrapped(problem, config=SolverConfig(), callback=None):
        return keep(label, real(problem, config, callback))

    solver.solve = wrapped
    try:
        yield
    finally:
        solver.solve = real


# -- 1 -----------------------------------------------------------------------

def test_c1_calibration():
    inst = synth.calibration_instance(seed=0)
    lam = 1 / np.sqrt(200)
    problems = {
        "PCP": make_problem(inst.X, lam=lam),
        "PCPSM": make_problem(inst.X, S=inst.S, alpha=0.2, lam=lam),
        "PCPF": make_problem(inst.X, U=inst.U, V=inst.V, lam=lam),
        "PCPSFM": make_problem(inst.X, S=inst.S, U=inst.U, V=inst.V, alpha=0.2, lam=lam),
    }
    cfg = SolverConfig(beta=1.1, epsilon=1e-7, mu_max=1e7, max_iter=1000)
    details, ok = [], True
    for name, p in problems.items():
        t0 = time.perf_counter()
        rep = keep(f"c1 {name}", solve(p, cfg))
        secs = time.perf_counter() - t0
        rank = numerics.numerical_rank(rep.L, 1e-10)
        sparsity = rep.sparsity()
        err = bench.rel_error(rep.L, inst.L0)
        good = (rep.converged and rep.iterations <= 1000 and rank == 10
                and abs(sparsity - 0.05) <= 0.005 and err <= 1e-5)
        ok &= good
        details.append(f"{name} it={rep.iterations} rank={rank} sp={sparsity:.4f} "
                       f"err={err:.1e} {secs:.1f}s")
    record("C1 calibration", ok, "; ".join(details))
    assert ok


# -- 2 -----------------------------------------------------------------------

def test_c2_reduction_equivalence():
    cfg = SolverConfig()
    worst, ok = 0.0, True
    for seed in range(20):
        inst = synth.make_instance(60, 60, 3, 0.05, d=0, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = make_problem(inst.X, S=inst.S, alpha=0.0)
        seen = []
        rep = keep(f"c2 seed={seed}", solve(p, cfg, callback=lambda s: seen.append((s.L.copy(), s.E.copy()))))
        path = reduced_pcp_path(inst.X, p.lam, cfg.beta, cfg.epsilon, cfg.mu_max, cfg.max_iter)
        if len(seen) != len(path):
            ok = False
            continue
        for (L, E), (Lr, Er) in zip(seen, path):
            for A, R in ((L, Lr), (E, Er)):
                ref = np.linalg.norm(R)
                dev = np.linalg.norm(A - R) / ref if ref > 0 else np.linalg.norm(A)
                worst = max(worst, dev)
    ok &= worst <= 1e-8
    record("C2 reduction equivalence", ok,
           f"20 instances 60x60, worst per-iterate relative deviation {worst:.1e} (tol 1e-8)")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_c3_tiny_oracle():
    lam = 1 / np.sqrt(10)
    devs, slow_devs = [], []
    for seed in range(5):
        L0, X = tiny_pcp_instance(seed)
        rep = keep(f"c3 seed={seed}", solve(make_problem(X, lam=lam)))
        L_ref, _, _ = prox_grad_pcp(X, lam, iters=10**6)
        devs.append(bench.rel_error(rep.L, L_ref))
        # diagnostic only: a slower continuation ratio on the same instance
        slow = solve(make_problem(X, lam=lam), SolverConfig(beta=1.01))
        slow_devs.append(bench.rel_error(slow.L, L_ref))
    ok = max(devs) <= 1e-4
    record("C3 tiny-instance oracle", ok,
           "deviation from prox-gradient oracle per seed "
           + " ".join(f"{d:.1e}" for d in devs) + " (tol 1e-4, default beta=1.1); "
           "with beta=1.01: " + " ".join(f"{d:.1e}" for d in slow_devs))
    assert ok


# -- 4 -----------------------------------------------------------------------

@pytest.mark.slow
def test_c4_phase_dominance():
    lines, ok = [], True
    for observed, label in ((1.0, "full"), (0.9, "10% occlusion")):
        cfg = bench.PhaseConfig(observed_fraction=observed)
        with recording_solves(f"c4 {label}"):
            grid = bench.run_phase(cfg)
        cells = {m: grid.success_cells(m) for m in cfg.methods}
        inc1 = cells["PCP"] <= cells["PCPSM"]
        inc2 = cells["PCPF"] <= cells["PCPSFM"]
        more = len(cells["PCPSFM"]) > len(cells["PCP"])
        good = inc1 and inc2 and more
        if observed < 1:
            gap = cells["PCPSM"] - cells["PCP"]
            good &= bool(gap)
        ok &= good
        counts = " ".join(f"{m}={len(c)}" for m, c in cells.items())
        extra = f" gap(PCPSM-PCP)={len(cells['PCPSM'] - cells['PCP'])}"
        lines.append(f"{label}: {counts} PCP<=PCPSM {inc1} PCPF<=PCPSFM {inc2}{extra}")
    record("C4 phase-transition dominance", ok, "; ".join(lines))
    assert ok


# -- 5 -----------------------------------------------------------------------

def test_c5_proximal_operators():
    g = np.random.default_rng(2024)
    bad = {"shrink": 0, "spectral": 0, "inner": 0, "nonexp": 0}
    for _ in range(1000):
        shape = tuple(g.integers(1, 9, size=2))
        A = g.standard_normal(shape)
        B = g.standard_normal(shape)
        tau = float(g.uniform(0, 2))
        if not np.array_equal(numerics.shrink(A, tau), shrink_loop(A, tau)):
            bad["shrink"] += 1
        Z = numerics.svt(A, tau)
        G = A - Z
        if np.linalg.norm(G, 2) > tau + 1e-8:
            bad["spectral"] += 1
        if abs(np.sum(G * Z) - tau * numerics.nuclear_norm(Z)) > 1e-8:
            bad["inner"] += 1
        d = np.linalg.norm(A - B)
        if (np.linalg.norm(Z - numerics.svt(B, tau)) > d * (1 + 1e-12)
                or np.linalg.norm(numerics.shrink(A, tau) - numerics.shrink(B, tau)) > d * (1 + 1e-12)):
            bad["nonexp"] += 1
    ok = not any(bad.values())
    record("C5 proximal operators", ok,
           "1000 matrices up to 8x8, violations " + " ".join(f"{k}={v}" for k, v in bad.items()))
    assert ok


# -- 7 -----------------------------------------------------------------------

def test_c7_denoising_ordering():
    h = w = 32
    L0, E0, X, W = synth.gen_frame_sequence(h, w, 64, rank=8, error_fraction=0.05,
                                            missing_fraction=0.05, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        problems = {
            "PCP": denoise.build_problem(X, W),
            "PCPSM": denoise.build_problem(X, W, side="mean", alpha=0.5),
            "PCPSFM": denoise.build_problem(X, W, side="mean", features="ksvd", alpha=0.5, seed=0),
        }
    m = {}
    for name, p in problems.items():
        rep = solve(p)
        m[name] = bench.frame_metrics(rep.L, L0, h, w)
        m[name]["converged"] = rep.converged
    U, V = problems["PCPSFM"].U, problems["PCPSFM"].V
    bound = bench.psnr(L0, U @ (U.T @ L0 @ V) @ V.T)
    p_ok = m["PCPSFM"]["psnr"] > m["PCPSM"]["psnr"] > m["PCP"]["psnr"]
    s_ok = m["PCPSFM"]["ssim"] > m["PCPSM"]["ssim"] > m["PCP"]["ssim"]
    ok = p_ok and s_ok
    record("C7 denoising ordering", ok,
           " ".join(f"{k} psnr={v['psnr']:.2f} ssim={v['ssim']:.4f}" for k, v in m.items())
           + f"; feature-projection bound on PCPSFM psnr={bound:.2f}")
    assert ok


# -- 8 -----------------------------------------------------------------------

def test_c8_ksvd():
    g = np.random.default_rng(8)
    D0 = g.standard_normal((256, 40))
    D0 /= np.linalg.norm(D0, axis=0)
    B0 = np.zeros((40, 200))
    for j in range(200):
        idx = g.choice(40, 2, replace=False)
        B0[idx, j] = g.choice([-1, 1], 2) * g.uniform(0.5, 1.5, 2)
    M = D0 @ B0
    coherence = np.max(np.abs(D0.T @ D0) - np.eye(40))
    d = ksvd.ksvd_learn(M, c=40, t=2, iterations=10, seed=0)
    mono = all(b <= a for a, b in zip(d.history, d.history[1:]))
    unit = np.allclose(np.linalg.norm(d.D, axis=0), 1.0, atol=1e-12)
    codes = ksvd.sparse_code(D0, M, 2)
    code_err = np.max(np.abs(codes - B0))
    ok = mono and unit and code_err < 1e-10 and len(d.history) == 10
    record("C8 K-SVD", ok,
           f"error history {d.history[0]:.3g} -> {d.history[-1]:.3g} non-increasing={mono}, "
           f"unit atoms={unit}, OMP max code error {code_err:.1e} at coherence {coherence:.2f}")
    assert ok


# -- 9 -----------------------------------------------------------------------

def _hashes(directory):
    """Hash every output file; JSON reports are hashed without their wall time."""
    out = {}
    for p in sorted(glob.glob(os.path.join(directory, "**", "*"), recursive=True)):
        if not os.path.isfile(p):
            continue
        data = open(p, "rb").read()
        if p.endswith("report.json"):
            rep = json.loads(data)
            rep.pop("wall_time_s")
            data = json.dumps(rep, sort_keys=True).encode()
        out[os.path.relpath(p, directory)] = hashlib.sha256(data).hexdigest()
    return out


def test_c9_determinism(tmp_path):
    from rpca_side import io
    frames = tmp_path / "frames"
    frames.mkdir()
    L0, E0, X, W = synth.gen_frame_sequence(16, 16, 16, rank=3, missing_fraction=0.0, seed=3)
    for k in range(16):
        img = np.rint(np.clip((L0 + E0)[:, k], 0, 1).reshape(16, 16) * 255).astype(int)
        io.write_pgm(frames / f"f{k:02d}.pgm", img)
    g = f"{tmp_path}/gen"
    commands = {
        "gen": ["gen", "--n1", "50", "--n2", "40", "--rank", "4", "--features", "3",
                "--missing", "0.1", "--seed", "7", "--out", g],
        "solve": ["solve", "--x", f"{g}/X.bmat", "--mask", f"{g}/W.bmat", "--side", f"{g}/S.bmat",
                  "--u", f"{g}/U.bmat", "--v", f"{g}/V.bmat", "--out", f"{tmp_path}/solve",
                  "--report", f"{tmp_path}/solve/report.json"],
        "phase": ["phase", "--ranks", "2,4", "--densities", "0.05,0.1", "--trials", "1",
                  "--n1", "30", "--n2", "30", "--d", "2", "--seed", "3", "--out", f"{tmp_path}/phase",
                  "--report", f"{tmp_path}/phase/report.json"],
        "denoise": ["denoise", "--images", str(frames / "*.pgm"), "--ksvd-atoms", "8",
                    "--ksvd-sparsity", "4", "--ksvd-iters", "3", "--seed", "11",
                    "--out", f"{tmp_path}/denoise", "--report", f"{tmp_path}/denoise/report.json"],
    }
    same = {}
    for name, argv in commands.items():
        out = str(tmp_path / name)
        cli_main(argv)
        first = _hashes(out)
        if name != "gen":
            shutil.rmtree(out)
        else:
            # keep the inputs for solve in place; regenerate into a scratch copy
            shutil.move(out, out + "_first")
        cli_main(argv)
        same[name] = bool(first) and _hashes(out) == first
    ok = all(same.values())
    record("C9 determinism", ok,
           " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok


# -- 6 (last, so it sees every run above) ------------------------------------

def test_c6_kkt_termination():
    if not RUNS:
        test_c1_calibration()
    converged = [r for r in RUNS if r[1]]
    violations = [r for r in converged if not (r[2] <= EPS and r[3] <= EPS)]
    ok = bool(converged) and not violations
    record("C6 KKT termination", ok,
           f"{len(converged)} converged runs from criteria 1-4, {len(violations)} with a residual > {EPS:g}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
