"""Partial penalized Wald, score, and likelihood-ratio tests for
high-dimensional GLMs, with the two-step LLA / constrained-ADMM solver
stack and a seeded Monte-Carlo simulation engine."""

from ._backend import BACKEND
from .errors import InputError, PpglmError, SolverError
from .families import Dataset, family_from_name, gaussian, logistic, poisson
from .inference import (RunResult, TestConfig, TestReport, power_approx,
                        run_test)
from .lasso import LassoConfig
from .lla import HypothesisSpec, LlaConfig
from .penalties import PenaltySpec, l1, mcp, scad
from .results import FitResult
from .sim import SimScenario, run_replications

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "FitResult",
    "HypothesisSpec",
    "InputError",
    "LassoConfig",
    "LlaConfig",
    "PenaltySpec",
    "PpglmError",
    "RunResult",
    "SimScenario",
    "SolverError",
    "TestConfig",
    "TestReport",
    "family_from_name",
    "gaussian",
    "l1",
    "logistic",
    "mcp",
    "poisson",
    "power_approx",
    "run_replications",
    "run_test",
    "scad",
    "__version__",
]
