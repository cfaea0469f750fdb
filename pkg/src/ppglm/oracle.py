"""Oracle fits on the true support and the events behind the LLA theory.

The oracle knows the true active set A.  With S = A minus the tested
block M, the full oracle is the unpenalized MLE over M union S, and
the reduced oracle is the same MLE subject to C beta_M = t, computed
by Newton steps on the KKT system.  ``check_lla_events`` measures the
conditions under which the two-step LLA estimator lands exactly on
these oracle fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, NewtonError
from .families import gradient, hessian_block, loss
from .results import FitResult

__all__ = ["OracleProblem", "fit_oracle_full", "fit_oracle_reduced",
           "check_lla_events", "EventReport"]

_MAX_NEWTON = 200


@dataclass(frozen=True)
class OracleProblem:
    """Oracle fitting problem: test block M, true active set A.

    S = A \\ M is the set of free signal coordinates.  The fit is over
    M union S (plus the intercept column when the data has one), which
    must not exceed n coordinates.
    """

    family: object
    data: object
    M: np.ndarray
    A: np.ndarray
    hyp: object = None

    def __init__(self, family, data, M, A, hyp=None):
        M = np.unique(np.asarray(M, dtype=np.intp))
        A = np.unique(np.asarray(A, dtype=np.intp)).astype(np.intp)
        if M.size == 0 or np.any(M < 0) or np.any(M >= data.p):
            raise InputError("M must be a nonempty set of column indices")
        if A.size and (np.any(A < 0) or np.any(A >= data.p)):
            raise InputError("A must be a set of column indices")
        if data.has_intercept and np.any(M == 0):
            raise InputError("the intercept cannot be tested")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "hyp", hyp)
        if self.active.size > data.n:
            raise InputError("oracle active set larger than the sample")

    @property
    def S(self):
        out = np.setdiff1d(self.A, self.M, assume_unique=True)
        if self.data.has_intercept:
            out = out[out != 0]
        return out

    @property
    def active(self):
        """Columns the oracle fits over: intercept (if any), M, and S."""
        parts = [self.M, self.S]
        if self.data.has_intercept:
            parts.append(np.array([0], dtype=np.intp))
        return np.unique(np.concatenate(parts)).astype(np.intp)


def _restricted(problem, beta):
    g = gradient(problem.family, problem.data, beta)
    return g[problem.active]


def _newton(problem, Cb, t, tol, max_iter):
    """Damped Newton over the active columns; Cb of None means
    unconstrained, else rows of Cb act on the active coordinates."""
    fam, data = problem.family, problem.data
    act = problem.active
    beta = np.zeros(data.p)
    if Cb is not None:
        # feasible start: minimum-norm solution of Cb beta_act = t.
        # every Newton direction then stays in the constraint nullspace.
        beta[act] = Cb.T @ np.linalg.solve(Cb @ Cb.T, t)
    nu = np.zeros(0 if Cb is None else Cb.shape[0])
    cur_loss = loss(fam, data, beta)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        g = _restricted(problem, beta)
        H = hessian_block(fam, data, beta, act)
        if Cb is None:
            grad_norm = np.max(np.abs(g))
            if grad_norm < tol:
                return beta, nu, n_iter - 1, cur_loss
            try:
                c, lo = cho_factor(H, lower=True)
                delta = -cho_solve((c, lo), g)
            except np.linalg.LinAlgError:
                c, lo = cho_factor(H + 1e-10 * np.eye(H.shape[0]), lower=True)
                delta = -cho_solve((c, lo), g)
        else:
            r = Cb.shape[0]
            kkt = np.block([[H, Cb.T], [Cb, np.zeros((r, r))]])
            rhs = np.concatenate([-g, t - Cb @ beta[act]])
            sol = np.linalg.solve(kkt, rhs)
            delta, nu = sol[:act.size], sol[act.size:]
            if np.max(np.abs(g + Cb.T @ nu)) < tol:
                return beta, nu, n_iter - 1, cur_loss
        slope = g @ delta
        step = 1.0
        while step >= 1e-12:
            cand = beta.copy()
            cand[act] += step * delta
            new_loss = loss(fam, data, cand)
            if new_loss <= cur_loss + 1e-4 * step * slope:
                break
            step /= 2.0
        else:
            if slope > -1e-13 * (1.0 + abs(cur_loss)):
                return beta, nu, n_iter, cur_loss
            raise NewtonError("oracle Newton line search failed")
        beta, cur_loss = cand, new_loss
    g = _restricted(problem, beta)
    resid = g if Cb is None else g + Cb.T @ nu
    if np.max(np.abs(resid)) >= tol:
        raise NewtonError(f"oracle Newton did not converge in {max_iter} steps")
    return beta, nu, n_iter, cur_loss


def _support(problem, beta):
    S = problem.S
    return S[beta[S] != 0.0]


def fit_oracle_full(problem, tol=1e-10, max_iter=_MAX_NEWTON):
    """Unpenalized MLE over the oracle active set."""
    beta, _, n_iter, obj = _newton(problem, None, None, tol, max_iter)
    return FitResult(beta=beta, support=_support(problem, beta),
                     objective=obj, n_iter=n_iter, converged=True,
                     extras={"active": problem.active})


def fit_oracle_reduced(problem, tol=1e-10, max_iter=_MAX_NEWTON):
    """Oracle MLE subject to C beta_M = t from the attached hypothesis."""
    if problem.hyp is None:
        raise InputError("reduced oracle needs a hypothesis")
    hyp = problem.hyp
    act = problem.active
    pos = np.searchsorted(act, hyp.M)
    if not np.array_equal(act[pos], hyp.M):
        raise InputError("hypothesis indexes outside the active set")
    Cb = np.zeros((hyp.r, act.size))
    Cb[:, pos] = hyp.C
    beta, nu, n_iter, obj = _newton(problem, Cb, hyp.t, tol, max_iter)
    feas = float(np.max(np.abs(hyp.C @ beta[hyp.M] - hyp.t)))
    if feas >= 1e-10:
        raise NewtonError(f"constraint violated at exit: {feas:.3e}")
    return FitResult(beta=beta, support=_support(problem, beta),
                     objective=obj, n_iter=n_iter, converged=True,
                     extras={"active": problem.active, "multiplier": nu,
                             "feasibility": feas})


@dataclass(frozen=True)
class EventReport:
    """Checkable conditions for LLA-lands-on-oracle results.

    Each event is True/False, or None when its inputs were not given.
    margins maps event name to (achieved value, required bound).
    """

    init_close: bool | None
    gradient_interior: bool
    signal_above_threshold: bool
    separation: bool | None
    margins: dict

    @property
    def all_hold(self):
        checks = [self.init_close, self.gradient_interior,
                  self.signal_above_threshold, self.separation]
        return all(c for c in checks if c is not None)


def check_lla_events(problem, fit, penalty, beta_init=None, beta_star=None):
    """Evaluate the localization, gradient, and signal-strength events
    at an oracle fit.

    init_close:   max_{j not in M} |beta_init_j - beta*_j| <= a0 * lambda
    gradient_interior: max over inactive coords of |grad loss(fit)| < a1 * lambda
    signal_above_threshold: min_{j in S} |fit.beta_j| > a * lambda
    separation:   min_{j in S} |beta*_j| > (a + 1) * lambda

    Signal events are vacuously true when S is empty.
    """
    data = problem.data
    lam = penalty.lam
    act = problem.active
    S = problem.S

    out = np.setdiff1d(np.arange(data.p), act, assume_unique=False)
    g = gradient(problem.family, problem.data, fit.beta)
    grad_out = float(np.max(np.abs(g[out]))) if out.size else 0.0
    grad_bound = penalty.a1 * lam
    margins = {"gradient_interior": (grad_out, grad_bound)}
    gradient_interior = grad_out < grad_bound

    if S.size:
        min_coef = float(np.min(np.abs(fit.beta[S])))
        signal = min_coef > penalty.a * lam
        margins["signal_above_threshold"] = (min_coef, penalty.a * lam)
    else:
        signal = True
        margins["signal_above_threshold"] = (np.inf, penalty.a * lam)

    init_close = None
    if beta_init is not None and beta_star is not None:
        free = np.setdiff1d(np.arange(data.p), problem.M, assume_unique=False)
        if data.has_intercept:
            free = free[free != 0]
        gap = float(np.max(np.abs(np.asarray(beta_init)[free]
                                  - np.asarray(beta_star)[free])))
        bound = penalty.a0 * lam
        init_close = gap <= bound
        margins["init_close"] = (gap, bound)

    separation = None
    if beta_star is not None:
        if S.size:
            min_sig = float(np.min(np.abs(np.asarray(beta_star)[S])))
            separation = min_sig > (penalty.a + 1.0) * lam
            margins["separation"] = (min_sig, (penalty.a + 1.0) * lam)
        else:
            separation = True
            margins["separation"] = (np.inf, (penalty.a + 1.0) * lam)

    return EventReport(init_close=init_close, gradient_interior=gradient_interior,
                       signal_above_threshold=signal, separation=separation,
                       margins=margins)
