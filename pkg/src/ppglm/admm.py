"""Equality-constrained weighted-lasso solver.

Solves

    min_beta  loss(beta) + sum_{j penalized} w_j |beta_j|
    s.t.      C beta_M = t

by ADMM: the penalized block gets a split variable eta updated by
soft-thresholding (so zeros are exact), the linear constraint is
absorbed into the augmented Lagrangian.  Every LLA step reduces to one
of these solves; the full-model updates use an empty constraint block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._backend import kernels
from .errors import ConvergenceError, InputError, NewtonError
from .families import _variance, gradient, loss
from .results import FitResult

__all__ = ["ConstrainedWLassoProblem", "AdmmConfig", "AdmmState",
           "AdmmDiagnostics", "solve", "beta_update", "eta_update",
           "penalized_indices"]


def penalized_indices(p, M, has_intercept):
    """Sorted complement of M (and the intercept column) in range(p)."""
    mask = np.ones(p, dtype=bool)
    mask[np.asarray(M, dtype=np.intp)] = False
    if has_intercept:
        mask[0] = False
    return np.flatnonzero(mask).astype(np.intp)


@dataclass
class ConstrainedWLassoProblem:
    """One constrained weighted-lasso instance.

    ``weights`` maps every penalized coordinate (all columns outside M,
    minus the intercept) to a nonnegative multiplier; it may be given
    as a dict keyed by column index or as an array aligned with the
    sorted penalized index set.  ``C`` may be None for an unconstrained
    (full-model) solve.
    """

    family: object
    data: object
    M: np.ndarray
    C: np.ndarray | None
    t: np.ndarray | None
    weights: object

    def __post_init__(self):
        M = np.unique(np.asarray(self.M, dtype=np.intp))
        if M.size and (M.min() < 0 or M.max() >= self.data.p):
            raise InputError("M indices out of range")
        if self.data.has_intercept and M.size and M[0] == 0:
            raise InputError("the intercept column cannot be tested (index 0 is reserved)")
        self.M = M

        if self.C is None or np.size(self.C) == 0:
            self.C = None
            self.t = None
        else:
            C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
            t = np.atleast_1d(np.asarray(self.t, dtype=np.float64))
            if C.shape[1] != M.size:
                raise InputError(f"C has {C.shape[1]} columns, expected |M| = {M.size}")
            if t.shape != (C.shape[0],):
                raise InputError("t length must match the rows of C")
            if np.linalg.matrix_rank(C) < C.shape[0]:
                raise InputError("constraint matrix rank deficient")
            self.C, self.t = C, t

        pen = penalized_indices(self.data.p, self.M, self.data.has_intercept)
        w = self.weights
        if isinstance(w, dict):
            if set(w) != set(pen.tolist()):
                raise InputError("weights must be keyed by exactly the penalized indices")
            w = np.array([w[j] for j in pen], dtype=np.float64)
        else:
            w = np.asarray(w, dtype=np.float64)
            if w.shape != pen.shape:
                raise InputError(f"weights length {w.shape} does not match "
                                 f"penalized set size {pen.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError("weights must be finite and nonnegative")
        self.weights = w
        self._pen = pen

    @property
    def penalized(self):
        return self._pen

    @property
    def m(self):
        return self.M.size

    @property
    def r(self):
        return 0 if self.C is None else self.C.shape[0]


@dataclass(frozen=True)
class AdmmConfig:
    """Solver knobs.  Stopping uses tol * sqrt(block dimension) plus a
    relative term scaled by the iterate norms, per residual."""

    rho: float = 1.0
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    max_iter: int = 10000
    newton_tol: float = 1e-8
    newton_max: int = 50
    adapt_rho: bool = True

    def __post_init__(self):
        if min(self.rho, self.tol_primal, self.tol_dual, self.newton_tol) <= 0:
            raise InputError("rho and all tolerances must be positive")


@dataclass
class AdmmState:
    beta: np.ndarray
    eta: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    k: int = 0


@dataclass
class AdmmDiagnostics:
    n_iter: int
    converged: bool
    rho_final: float
    residuals: np.ndarray            # [||C beta_M - t||, ||beta_pen - eta||, dual]
    residual_history: np.ndarray     # the triple every 10 iterations plus last
    newton_steps: int
    n_factor: int


def _initial_state(problem, beta0=None):
    p = problem.data.p
    beta = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=np.float64).copy()
    if beta.shape != (p,):
        raise InputError(f"initial beta has shape {beta.shape}, expected ({p},)")
    return AdmmState(beta=beta, eta=beta[problem.penalized].copy(),
                     nu1=np.zeros(problem.r), nu2=np.zeros(problem.penalized.size))


def solve(problem, config=None, state=None):
    """Run ADMM to convergence.

    Returns (FitResult, AdmmState, AdmmDiagnostics).  The FitResult
    coefficient vector has the penalized block replaced by eta, so its
    zeros are exact and the support is read directly off eta.
    Raises ConvergenceError when max_iter is exhausted and NewtonError
    when an inner beta-update system fails.
    """
    config = config or AdmmConfig()
    if state is None:
        state = _initial_state(problem)
    pen = problem.penalized
    C = problem.C if problem.C is not None else np.zeros((0, problem.m))
    t = problem.t if problem.t is not None else np.zeros(0)

    (beta, eta, nu1, nu2, k, status, rho, res, newton_steps, n_factor,
     res_hist) = kernels.admm_wlasso(
        problem.data.X, problem.data.y, problem.family.code,
        np.ascontiguousarray(C), np.ascontiguousarray(t),
        problem.M, pen, problem.weights,
        state.beta, state.eta, state.nu1, state.nu2,
        config.rho, config.tol_primal, config.tol_dual, config.max_iter,
        config.newton_tol, config.newton_max, config.adapt_rho)

    new_state = AdmmState(beta=beta, eta=eta, nu1=nu1, nu2=nu2, k=k)
    diagnostics = AdmmDiagnostics(
        n_iter=k, converged=(status == 0), rho_final=rho, residuals=res,
        residual_history=res_hist, newton_steps=newton_steps, n_factor=n_factor)

    if status == 2:
        raise NewtonError(
            f"beta-update Newton failed at ADMM iteration {k} "
            f"(residuals {res.tolist()})")
    if status == 1:
        err = ConvergenceError(
            f"ADMM did not converge in {k} iterations "
            f"(final residuals {res.tolist()})",
            last_iterate=beta, trace=res_hist)
        err.state = new_state
        raise err

    beta_out = beta.copy()
    beta_out[pen] = eta
    if problem.C is not None:
        # project the tested block onto {C beta_M = t} so the returned
        # fit is exactly feasible; the shift is within tol_primal
        gap = problem.C @ beta_out[problem.M] - problem.t
        corr = problem.C.T @ np.linalg.solve(problem.C @ problem.C.T, gap)
        beta_out[problem.M] -= corr
    support = pen[eta != 0.0]
    objective = (loss(problem.family, problem.data, beta_out)
                 + float(problem.weights @ np.abs(eta)))
    fit = FitResult(beta=beta_out, support=support, objective=objective,
                    n_iter=k, converged=True,
                    extras={"rho": rho, "residuals": res,
                            "newton_steps": newton_steps})
    return fit, new_state, diagnostics


def beta_update(state, problem, config):
    """Solve the beta-subproblem at fixed (eta, nu) to newton_tol.

    Gaussian is a single symmetric positive-definite solve; the other
    families run damped Newton with step-halving.  Exposed for
    diagnostics and tests; ``solve`` runs the same update inside the
    kernel loop.
    """
    data, fam = problem.data, problem.family
    X, y, n, p = data.X, data.y, data.n, data.p
    pen, M = problem.penalized, problem.M
    rho = config.rho
    C = problem.C if problem.C is not None else np.zeros((0, problem.m))
    t = problem.t if problem.t is not None else np.zeros(0)
    eta, nu1, nu2 = state.eta, state.nu1, state.nu2

    Cpad = np.zeros((C.shape[0], p))
    if C.shape[0]:
        Cpad[:, M] = C
    Bmat = Cpad.T @ Cpad
    Bmat[pen, pen] += 1.0

    def grad_aug(b):
        g = gradient(fam, data, b)
        if C.shape[0]:
            g[M] += rho * (C.T @ (C @ b[M] - t + nu1 / rho))
        g[pen] += rho * (b[pen] - eta + nu2 / rho)
        return g

    def val_aug(b):
        v = loss(fam, data, b)
        if C.shape[0]:
            u = C @ b[M] - t + nu1 / rho
            v += 0.5 * rho * (u @ u)
        w = b[pen] - eta + nu2 / rho
        return v + 0.5 * rho * (w @ w)

    beta = state.beta.copy()
    for _ in range(config.newton_max):
        g = grad_aug(beta)
        if np.max(np.abs(g)) <= config.newton_tol:
            break
        w = _variance(fam, X @ beta)
        H = (X.T * w) @ X / n + rho * Bmat
        try:
            ch = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            try:
                ch = scipy.linalg.cho_factor(H + 1e-8 * np.eye(p), lower=True,
                                             check_finite=False)
            except scipy.linalg.LinAlgError:
                raise NewtonError("beta-update Hessian singular beyond ridge repair")
        delta = -scipy.linalg.cho_solve(ch, g, check_finite=False)
        base, slope = val_aug(beta), g @ delta
        alpha = 1.0
        while alpha > 1e-10:
            if val_aug(beta + alpha * delta) <= base + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            if slope > -1e-13 * (1.0 + abs(base)):
                break
            raise NewtonError("beta-update line search failed on a fresh Hessian")
        beta = beta + alpha * delta
    return beta


def eta_update(state, problem, config):
    """Proximal step eta_j = soft(beta_j + nu2_j/rho, w_j/rho)."""
    rho = config.rho
    z = state.beta[problem.penalized] + state.nu2 / rho
    return kernels.soft_threshold(z, problem.weights / rho)
