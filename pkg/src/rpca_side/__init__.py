"""Robust PCA with side information, features and missing values."""

__version__ = "0.1.0"

from .bench import psnr, rel_error, ssim
from .numerics import orthonormalize, shrink, svd, svt
from .solver import Model, Problem, SolverConfig, SolveReport, default_lambda, make_problem, solve

__all__ = [
    "Model", "Problem", "SolverConfig", "SolveReport", "default_lambda", "make_problem",
    "solve", "orthonormalize", "shrink", "svd", "svt", "psnr", "rel_error", "ssim",
]
