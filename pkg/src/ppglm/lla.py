"""Folded-concave fitting by local linear approximation.

Each step linearizes the penalty at the current iterate, giving a
weighted-l1 problem solved by the constrained ADMM routine, with
weights w_j = p'_lambda(|beta_j|).  Coordinates that the previous step
zeroed out get the full weight p'(0) = lambda; large coordinates get
weight 0 under SCAD or MCP, which is what removes their shrinkage
bias.  Two steps from a reasonable initializer are normally enough;
``to_fixed_point`` keeps stepping until the iterate stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, ConstrainedWLassoProblem, penalized_indices, solve
from .errors import InputError, SolverError
from .families import loss
from .penalties import derivative
from .results import FitResult

__all__ = ["HypothesisSpec", "LlaConfig", "lla_full", "lla_reduced", "gic_select"]


@dataclass(frozen=True)
class HypothesisSpec:
    """Linear hypothesis C beta_M = t on the coordinates listed in M.

    M holds column indices into the design matrix; the intercept
    column may not be tested.  C must have full row rank, so r =
    C.shape[0] is the degrees of freedom of every test built from the
    spec.
    """

    M: np.ndarray
    C: np.ndarray
    t: np.ndarray

    def __init__(self, M, C, t):
        M = np.unique(np.asarray(M, dtype=np.intp))
        if M.size == 0 or np.any(M < 0):
            raise InputError("M must be a nonempty set of nonnegative indices")
        C = np.atleast_2d(np.asarray(C, dtype=np.float64))
        t = np.atleast_1d(np.asarray(t, dtype=np.float64)).ravel()
        if C.shape[1] != M.size:
            raise InputError(f"C has {C.shape[1]} columns but |M| = {M.size}")
        if C.shape[0] != t.size:
            raise InputError("C and t disagree on the number of constraints")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(t))):
            raise InputError("C and t must be finite")
        if np.linalg.matrix_rank(C) < C.shape[0]:
            raise InputError("constraint matrix rank deficient")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "t", t)

    @property
    def r(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class LlaConfig:
    """Settings for the outer LLA loop."""

    # both tolerances sit two decades above the ADMM residual targets:
    # successive LLA iterates inherit roughly solver-tolerance noise,
    # so tighter values would flag converged runs as unstable
    steps: int = 2
    to_fixed_point: bool = False
    max_steps: int = 25
    fixed_point_tol: float = 1e-6
    stability_tol: float = 1e-5
    admm: AdmmConfig = field(default_factory=AdmmConfig)

    def __post_init__(self):
        if self.steps < 1:
            raise InputError("steps must be >= 1")
        if self.max_steps < self.steps:
            raise InputError("max_steps must be >= steps")


def _weights_at(penalty, beta, pen_idx):
    return derivative(penalty, np.abs(beta[pen_idx]))


def _run_lla(family, data, M, C, t, penalty, beta_init, config):
    pen_idx = penalized_indices(data.p, M, data.has_intercept)
    beta_init = np.asarray(beta_init, dtype=np.float64)
    if beta_init.shape != (data.p,):
        raise InputError(f"beta_init must have shape ({data.p},)")

    cur = beta_init
    state = None
    prev = None
    steps_done = 0
    admm_iters = []
    budget = config.max_steps if config.to_fixed_point else config.steps
    for step in range(1, budget + 1):
        w = _weights_at(penalty, cur, pen_idx)
        problem = ConstrainedWLassoProblem(
            family=family, data=data, M=M, C=C, t=t, weights=w)
        try:
            fit, state, diag = solve(problem, config.admm, state)
        except SolverError as err:
            err.args = (f"LLA step {step}: {err.args[0]}",) + err.args[1:]
            raise
        prev, cur = cur, fit.beta
        steps_done = step
        admm_iters.append(diag.n_iter)
        if config.to_fixed_point and step >= 2:
            if np.max(np.abs(cur - prev)) < config.fixed_point_tol:
                break

    stable = bool(steps_done >= 2
                  and np.max(np.abs(cur - prev)) < config.stability_tol)
    fit.extras.update({
        "lambda": float(penalty.lam),
        "penalty": penalty.kind,
        "lla_steps": steps_done,
        "two_step_stable": stable,
        "admm_iterations": admm_iters,
        "weights": _weights_at(penalty, cur, pen_idx),
    })
    return fit


def lla_full(family, data, M, penalty, beta_init, config=None):
    """Fit the model with beta_M unpenalized and free (no constraint).

    beta_init seeds the first LLA linearization; the l1 path fit at a
    cross-validated lambda is the intended choice.
    """
    config = config or LlaConfig()
    return _run_lla(family, data, M, None, None, penalty, beta_init, config)


def lla_reduced(family, data, hyp, penalty, beta_init, config=None):
    """Fit under the constraint hyp.C beta_M = hyp.t, beta_M unpenalized."""
    config = config or LlaConfig()
    if np.any(hyp.M >= data.p):
        raise InputError("hypothesis indexes past the design matrix")
    if data.has_intercept and np.any(hyp.M == 0):
        raise InputError("the intercept cannot be tested")
    return _run_lla(family, data, hyp.M, hyp.C, hyp.t, penalty, beta_init, config)


def gic_select(family, data, fits):
    """Pick the tuning parameter by generalized information criterion.

    fits is a list of reduced-model fits ordered by descending lambda
    (each carrying extras['lambda']).  The criterion is

        n * loss(beta) + c_n * ||beta||_0,   c_n = max(log n, log(log n) * log p)

    with the zero-norm counting every nonzero coefficient except the
    intercept.  Ties break toward the larger lambda.  Returns
    (lambda_hat, index, scores).
    """
    if not fits:
        raise InputError("gic_select needs at least one fit")
    n, p = data.n, data.p
    c_n = max(np.log(n), np.log(np.log(n)) * np.log(p))
    scores = np.empty(len(fits))
    lambdas = np.empty(len(fits))
    for i, fit in enumerate(fits):
        df = int(np.count_nonzero(fit.beta))
        if data.has_intercept and fit.beta[0] != 0.0:
            df -= 1
        scores[i] = n * loss(family, data, fit.beta) + c_n * df
        lambdas[i] = fit.extras["lambda"]
    best = np.flatnonzero(scores == scores.min())
    idx = int(best[np.argmax(lambdas[best])])
    return float(lambdas[idx]), idx, scores
