"""Command-line entry point: ``rpca-side {gen,solve,phase,denoise,replay}``.

Exit codes: 0 success, 2 usage error, 3 not converged (outputs still
written), 4 I/O error, 5 numeric failure.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, bench, denoise, io, numerics, solver, synth
from .errors import (BadMagic, ConvergenceFailure, DegenerateInput, DimensionMismatch,
                     ParseError, RankDeficient, ShapeMismatch, ShapeOverflow,
                     UnsupportedFormat)

log = logging.getLogger("rpca_side")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4, 5

IO_ERRORS = (OSError, BadMagic, ShapeOverflow, ParseError, UnsupportedFormat, DimensionMismatch)
NUMERIC_ERRORS = (ConvergenceFailure, RankDeficient, DegenerateInput, FloatingPointError,
                  np.linalg.LinAlgError)


class UsageError(Exception):
    pass


def _float_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    return vals


def _int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    return vals


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _solver_config(args) -> solver.SolverConfig:
    try:
        return solver.SolverConfig(beta=args.beta, epsilon=args.eps, mu_max=args.mu_max,
                                   max_iter=args.max_iter, mu0_scale=args.mu0_scale,
                                   h_update=args.h_update)
    except ValueError as exc:
        raise UsageError(str(exc))


def _add_solver_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="sparsity weight (default 1/sqrt(max(n1, n2)))")
    p.add_argument("--beta", type=float, default=1.1, help="continuation ratio for mu")
    p.add_argument("--eps", type=float, default=1e-7, help="KKT residual tolerance")
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--mu-max", type=float, default=1e7)
    p.add_argument("--mu0-scale", type=float, default=1.0,
                   help="initial mu = mu0_scale / ||X||_2")
    p.add_argument("--h-update", choices=["exact", "literal"], default="exact")


def _solver_params(problem, cfg, seed=None):
    mu0 = cfg.mu0_scale / numerics.spectral_norm(problem.X) if np.any(problem.X) else None
    return {"alpha": problem.alpha, "lambda": problem.lam, "beta": cfg.beta,
            "epsilon": cfg.epsilon, "mu0": mu0, "mu0_scale": cfg.mu0_scale,
            "mu_max": cfg.mu_max, "max_iter": cfg.max_iter, "h_update": cfg.h_update,
            "seed": seed}


def _solve_summary(rep: solver.SolveReport) -> dict:
    return {"model": rep.model.value, "converged": rep.converged, "iterations": rep.iterations,
            "final_residuals": {"r_primal": rep.r_primal, "r_side": rep.r_side},
            "rank_L": rep.rank(), "sparsity_E": rep.sparsity()}


# -- gen ---------------------------------------------------------------------

def cmd_gen(args, argv):
    if args.rank < 0 or args.rank > min(args.n1, args.n2):
        raise UsageError(f"--rank {args.rank} violates 0 <= rank <= min(n1, n2) = {min(args.n1, args.n2)}")
    if args.rank + args.features > min(args.n1, args.n2):
        raise UsageError(f"rank + features = {args.rank + args.features} exceeds min(n1, n2) = "
                         f"{min(args.n1, args.n2)}")
    if not 0 <= args.density <= 1:
        raise UsageError("--density must lie in [0, 1]")
    if not 0 <= args.missing <= 1:
        raise UsageError("--missing must lie in [0, 1]")
    if args.side_noise == "default":
        side_var = None if args.rank > 0 else 0.0
    elif args.side_noise == "none":
        side_var = 0.0
    else:
        try:
            side_var = float(args.side_noise)
        except ValueError:
            raise UsageError("--side-noise must be 'default', 'none' or a variance")
        if side_var < 0:
            raise UsageError("--side-noise variance must be non-negative")
    inst = synth.make_instance(args.n1, args.n2, args.rank, args.density, args.sign,
                               d=args.features, missing=args.missing,
                               side_variance=side_var, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    files = {}
    for name in ("L0", "E0", "X", "W", "S", "U", "V"):
        path = os.path.join(args.out, f"{name}.bmat")
        io.write_bmat(path, getattr(inst, name))
        files[name] = f"{name}.bmat"
    manifest = {
        "command": argv,
        "version": __version__,
        "parameters": {"n1": args.n1, "n2": args.n2, "rank": args.rank, "density": args.density,
                       "sign": args.sign, "missing": args.missing, "side_noise": args.side_noise,
                       "side_variance": synth.side_noise_variance(args.rank) if side_var is None else side_var,
                       "features": args.features, "seed": args.seed},
        "files": files,
        "nonzeros_E0": int(np.count_nonzero(inst.E0)),
        "missing_entries": int(np.count_nonzero(inst.W == 0)),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(json.dumps({"out": args.out, "files": sorted(files.values())}))
    return EXIT_OK


# -- solve -------------------------------------------------------------------

def _load(path, what):
    try:
        return io.read_matrix(path)
    except (BadMagic, ShapeOverflow) as exc:
        raise type(exc)(f"{what}: {exc}") from exc


def cmd_solve(args, argv):
    t0 = time.perf_counter()
    X = _load(args.x, "--x")
    W = _load(args.mask, "--mask") if args.mask else None
    S = _load(args.side, "--side") if args.side else None
    U = _load(args.u, "--u") if args.u else None
    V = _load(args.v, "--v") if args.v else None
    for name, M, path in (("mask", W, args.mask), ("side", S, args.side)):
        if M is not None and M.shape != X.shape:
            raise ShapeMismatch(f"{name} file {path} has shape {M.shape}, X file {args.x} has {X.shape}")
    alpha = args.alpha
    if alpha is None:
        alpha = 0.2 if S is not None else 0.0
    if S is not None and alpha == 0:
        print("warning: --alpha 0 with --side given; side information ignored", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            problem = solver.make_problem(X, W=W, S=S, U=U, V=V, alpha=alpha, lam=args.lam)
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"{exc} (x={args.x}, u={args.u}, v={args.v})") from exc
    cfg = _solver_config(args)
    rep = solver.solve(problem, cfg)
    os.makedirs(args.out, exist_ok=True)
    outputs = {"L": os.path.join(args.out, "L.bmat"), "E": os.path.join(args.out, "E.bmat")}
    io.write_bmat(outputs["L"], rep.L)
    io.write_bmat(outputs["E"], rep.E)
    metrics = {}
    if args.truth:
        metrics["rel_error"] = bench.rel_error(rep.L, _load(args.truth, "--truth"))
    report = {"command": argv, "version": __version__,
              "parameters": _solver_params(problem, cfg), **_solve_summary(rep),
              "metrics": metrics, "outputs": outputs,
              "wall_time_s": time.perf_counter() - t0}
    _emit_report(report, args.report)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def _emit_report(report, path):
    text = json.dumps(report, indent=2, sort_keys=True, default=_jsonable)
    if path:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


# -- phase -------------------------------------------------------------------

def cmd_phase(args, argv):
    t0 = time.perf_counter()
    if not args.ranks:
        raise UsageError("--ranks must list at least one rank")
    if not args.densities:
        raise UsageError("--densities must list at least one density")
    methods = [m.strip().upper() for m in args.methods.split(",") if m.strip()]
    if max(args.ranks) + args.d > min(args.n1, args.n2):
        raise UsageError("largest rank plus --d exceeds the matrix dimension")
    try:
        cfg = bench.PhaseConfig(ranks=tuple(args.ranks), densities=tuple(args.densities),
                                trials_per_cell=args.trials, sign_mode=args.sign,
                                observed_fraction=args.observed, methods=tuple(methods),
                                base_seed=args.seed, n1=args.n1, n2=args.n2, d=args.d,
                                alpha=args.alpha, lam=args.lam, success_threshold=args.threshold,
                                solver=_solver_config(args))
    except ValueError as exc:
        raise UsageError(str(exc))

    def progress(job, res):
        log.info("rank=%d density=%g trial=%d %s", *job,
                 " ".join(f"{m}={e:.2e}" for m, e in res.items()))

    grid = bench.run_phase(cfg, workers=args.workers, progress=progress)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "phase.csv")
    json_path = os.path.join(args.out, "phase.json")
    grid.write_csv(csv_path)
    grid.write_json(json_path)
    report = {"command": argv, "version": __version__,
              "parameters": {"ranks": args.ranks, "densities": args.densities, "methods": methods,
                             "trials": args.trials, "sign": args.sign, "observed": args.observed,
                             "seed": args.seed, "n1": args.n1, "n2": args.n2, "d": args.d,
                             "alpha": args.alpha, "lambda": args.lam, "threshold": args.threshold,
                             "beta": args.beta, "epsilon": args.eps, "mu_max": args.mu_max,
                             "max_iter": args.max_iter, "mu0_scale": args.mu0_scale,
                             "h_update": args.h_update},
              "metrics": {"successful_cells": {m: len(grid.success_cells(m)) for m in methods}},
              "outputs": {"csv": csv_path, "json": json_path},
              "wall_time_s": time.perf_counter() - t0}
    _emit_report(report, args.report)
    return EXIT_OK


# -- denoise -----------------------------------------------------------------

def _expand(pattern):
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r}")
    return paths


def _side_matrix(source, shape, stack):
    if source.lower().endswith(".pgm"):
        pix, maxval = io.read_pgm(source)
        col = (pix.ravel() / maxval).reshape(-1, 1)
    else:
        col = _load(source, "--side")
    if col.shape == (shape[0], 1):
        col = np.repeat(col, shape[1], axis=1)
    if col.shape != shape:
        raise ShapeMismatch(f"side information {source} has shape {col.shape}, "
                            f"observation matrix has shape {shape}")
    return col


def cmd_denoise(args, argv):
    t0 = time.perf_counter()
    stack = io.stack_images(_expand(args.images))
    X0 = stack.matrix
    shape = X0.shape
    if args.mask:
        W = _load(args.mask, "--mask")
        if W.shape != shape:
            raise ShapeMismatch(f"mask {args.mask} has shape {W.shape}, observation matrix has shape {shape}")
    else:
        if not 0 <= args.missing <= 1:
            raise UsageError("--missing must lie in [0, 1]")
        W = synth.gen_mask(*shape, args.missing, seed=synth.child_seeds(args.seed, 2)[0])
    X = X0 * W

    if args.side == "none":
        side = None
    elif args.side == "mean":
        side = "mean"
    else:
        side = _side_matrix(args.side, shape, stack)

    if args.features == "none":
        features = None
    elif args.features == "ksvd":
        features = "ksvd"
    else:
        parts = args.features.split(",")
        if len(parts) != 2:
            raise UsageError("--features FILES must be 'U_FILE,V_FILE' (use '-' for identity)")
        features = tuple(None if p == "-" else _load(p, "--features") for p in parts)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        problem = denoise.build_problem(
            X, W, side=side, features=features, alpha=args.alpha, lam=args.lam,
            ksvd_atoms=args.ksvd_atoms, ksvd_sparsity=args.ksvd_sparsity,
            ksvd_iters=args.ksvd_iters, seed=synth.child_seeds(args.seed, 2)[1])
    cfg = _solver_config(args)
    rep = solver.solve(problem, cfg)

    os.makedirs(args.out, exist_ok=True)
    L_path = os.path.join(args.out, "L.bmat")
    E_path = os.path.join(args.out, "E.bmat")
    io.write_bmat(L_path, rep.L)
    io.write_bmat(E_path, rep.E)
    images = io.unstack_to_images(io.ImageColumnStack(stack.width, stack.height, stack.frames, rep.L),
                                  os.path.join(args.out, "recovered"))
    metrics = {"vs_input": bench.frame_metrics(rep.L, X0, stack.height, stack.width)}
    if args.truth:
        truth = io.stack_images(_expand(args.truth))
        if truth.matrix.shape != shape:
            raise ShapeMismatch(f"truth stack has shape {truth.matrix.shape}, observation has {shape}")
        metrics["vs_truth"] = bench.frame_metrics(rep.L, truth.matrix, stack.height, stack.width)
    params = _solver_params(problem, cfg, args.seed)
    params.update({"missing": args.missing, "side": args.side, "features": args.features,
                   "ksvd_atoms": args.ksvd_atoms, "ksvd_sparsity": args.ksvd_sparsity,
                   "ksvd_iters": args.ksvd_iters, "width": stack.width, "height": stack.height,
                   "frames": stack.frames})
    report = {"command": argv, "version": __version__, "parameters": params,
              **_solve_summary(rep), "metrics": metrics,
              "outputs": {"L": L_path, "E": E_path, "images": images},
              "wall_time_s": time.perf_counter() - t0}
    _emit_report(report, args.report)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_replay(args, argv):
    with open(args.report_file) as fh:
        report = json.load(fh)
    command = report.get("command")
    if not isinstance(command, list) or not command:
        raise UsageError(f"{args.report_file} has no recorded command")
    return main(command)


def build_parser() -> argparse.ArgumentParser:
    # no prefix matching at the top level, so "solve --v FILE" is not read as --version
    parser = argparse.ArgumentParser(prog="rpca-side", description=__doc__.splitlines()[0],
                                     allow_abbrev=False)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--n1", type=int, default=200)
    g.add_argument("--n2", type=int, default=200)
    g.add_argument("--rank", type=int, default=10)
    g.add_argument("--density", type=float, default=0.05)
    g.add_argument("--sign", choices=["random", "coherent"], default="random")
    g.add_argument("--missing", type=float, default=0.0, metavar="FRAC")
    g.add_argument("--side-noise", default="default", metavar="{default|none|VAR}",
                   help="side-information noise: default (about 1%% error), none, or a variance")
    g.add_argument("--features", type=int, default=10, metavar="D",
                   help="extra null-space columns in U and V")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="gen_out", metavar="DIR")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve one problem from matrix files")
    s.add_argument("--x", required=True, metavar="FILE")
    s.add_argument("--mask", metavar="FILE")
    s.add_argument("--side", metavar="FILE")
    s.add_argument("--u", metavar="FILE")
    s.add_argument("--v", metavar="FILE")
    s.add_argument("--truth", metavar="FILE", help="ground-truth L0 for rel_error")
    s.add_argument("--alpha", type=float, default=None,
                   help="side-information weight (default 0.2 with --side, else 0)")
    _add_solver_flags(s)
    s.add_argument("--out", default="solve_out", metavar="DIR")
    s.add_argument("--report", metavar="FILE")
    s.set_defaults(func=cmd_solve)

    p = sub.add_parser("phase", help="phase-transition sweep")
    p.add_argument("--ranks", type=_int_list, default=[10, 20, 30, 40, 50, 60])
    p.add_argument("--densities", type=_float_list, default=[0.05, 0.10, 0.15, 0.20, 0.25, 0.30])
    p.add_argument("--methods", default="PCP,PCPSM,PCPF,PCPSFM")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--sign", choices=["random", "coherent"], default="random")
    p.add_argument("--observed", type=float, default=1.0, metavar="FRAC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n1", type=int, default=200)
    p.add_argument("--n2", type=int, default=200)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p)
    p.add_argument("--out", default="phase_out", metavar="DIR")
    p.add_argument("--report", metavar="FILE")
    p.set_defaults(func=cmd_phase)

    d = sub.add_parser("denoise", help="denoise/complete a PGM image sequence")
    d.add_argument("--images", required=True, metavar="GLOB")
    d.add_argument("--mask", metavar="FILE", help="observation mask matrix (overrides --missing)")
    d.add_argument("--missing", type=float, default=0.05)
    d.add_argument("--side", default="mean", metavar="{mean|FILE|none}")
    d.add_argument("--features", default="ksvd", metavar="{ksvd|U_FILE,V_FILE|none}")
    d.add_argument("--ksvd-atoms", type=int, default=40)
    d.add_argument("--ksvd-sparsity", type=int, default=40)
    d.add_argument("--ksvd-iters", type=int, default=10)
    d.add_argument("--alpha", type=float, default=0.5)
    d.add_argument("--truth", metavar="GLOB")
    d.add_argument("--seed", type=int, default=0)
    _add_solver_flags(d)
    d.add_argument("--out", default="denoise_out", metavar="DIR")
    d.add_argument("--report", metavar="FILE")
    d.set_defaults(func=cmd_denoise)

    r = sub.add_parser("replay", help="re-run the command recorded in a report")
    r.add_argument("report_file", metavar="REPORT")
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"rpca-side {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IO_ERRORS as exc:
        print(f"rpca-side {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERIC_ERRORS as exc:
        print(f"rpca-side {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rpca-side {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
