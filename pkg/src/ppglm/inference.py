"""Partial penalized Wald, score, and likelihood ratio tests.

Each statistic restricts the information matrix to the tested block M
plus the selected support of the relevant penalized fit, so its size
stays O(|M| + |S|) regardless of the ambient dimension.  All three are
referred to the chi-square with r = rank(C) degrees of freedom.
Linear systems are solved through Cholesky factorizations; no matrix
is ever inverted explicitly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .chisq import central_chisq_sf, chisq_upper_quantile, noncentral_chisq_cdf
from .errors import InputError, SolverError
from .families import Dataset, gradient, hessian_block, loss
from .lasso import LassoConfig, cv_select, default_lambda_grid, fit_lasso
from .lla import HypothesisSpec, LlaConfig, gic_select, lla_full, lla_reduced
from .penalties import mcp, scad, l1

__all__ = ["TestConfig", "TestReport", "RunResult", "run_test",
           "support_set", "dispersion_estimate", "wald_statistic",
           "score_statistic", "lrt_statistic", "power_approx"]


def support_set(beta, M, has_intercept=False):
    """Indices of nonzero penalized coordinates: everything outside M
    (and the intercept) with an exactly nonzero coefficient."""
    beta = np.asarray(beta)
    mask = beta != 0.0
    mask[np.asarray(M, dtype=np.intp)] = False
    if has_intercept:
        mask[0] = False
    return np.flatnonzero(mask).astype(np.intp)


def _active(data, M, S):
    parts = [np.asarray(M, dtype=np.intp), np.asarray(S, dtype=np.intp)]
    if data.has_intercept:
        parts.append(np.array([0], dtype=np.intp))
    return np.unique(np.concatenate(parts)).astype(np.intp)


def _chol(mat, what):
    try:
        return cho_factor(mat, lower=True)
    except np.linalg.LinAlgError as err:
        raise SolverError(f"{what} is not positive definite") from err


def dispersion_estimate(family, data, fit, M):
    """Dispersion paired with a fit.

    Known-dispersion families return 1.  The gaussian estimate divides
    the residual sum of squares by n - |support| - |M| - 1; a
    nonpositive denominator is flagged and clamped to 1.
    """
    if family.dispersion_known:
        return 1.0, False
    S = support_set(fit.beta, M, data.has_intercept)
    resid = data.y - data.X @ fit.beta
    denom = data.n - S.size - len(np.unique(np.asarray(M))) - 1
    degenerate = denom <= 0
    if degenerate:
        warnings.warn("dispersion denominator nonpositive, clamping")
        denom = 1
    return float(resid @ resid / denom), degenerate


def wald_statistic(family, data, fit_full, hyp, phi_hat):
    """Quadratic form in C beta_M - t, normalized by the M block of
    the inverse information over M union the full fit's support."""
    S = support_set(fit_full.beta, hyp.M, data.has_intercept)
    act = _active(data, hyp.M, S)
    K = hessian_block(family, data, fit_full.beta, act)
    fac = _chol(K, "information matrix")
    pos = np.searchsorted(act, hyp.M)
    E = np.zeros((act.size, hyp.M.size))
    E[pos, np.arange(hyp.M.size)] = 1.0
    inv_block = cho_solve(fac, E)[pos, :]
    V = hyp.C @ inv_block @ hyp.C.T
    resid = hyp.C @ fit_full.beta[hyp.M] - hyp.t
    z = cho_solve(_chol(V, "Wald covariance"), resid)
    return float(data.n * (resid @ z) / phi_hat)


def score_statistic(family, data, fit_reduced, hyp, phi_hat):
    """Quadratic form in the restricted gradient at the reduced fit,
    normalized by the information over M union the reduced support."""
    S = support_set(fit_reduced.beta, hyp.M, data.has_intercept)
    act = _active(data, hyp.M, S)
    g = gradient(family, data, fit_reduced.beta)[act]
    K = hessian_block(family, data, fit_reduced.beta, act)
    z = cho_solve(_chol(K, "information matrix"), g)
    return float(data.n * (g @ z) / phi_hat)


def lrt_statistic(family, data, fit_full, fit_reduced, phi_hat):
    """Twice the scaled loss gap between reduced and full fits.

    Returns (value, negative_flag); the value is reported as computed
    even when the fits cross (negative gap), which the flag records.
    """
    gap = loss(family, data, fit_reduced.beta) - loss(family, data, fit_full.beta)
    value = float(2.0 * data.n * gap / phi_hat)
    return value, value < 0.0


@dataclass(frozen=True)
class TestReport:
    """One statistic referred to its chi-square reference."""

    statistic_kind: str
    value: float
    dof: int
    p_value: float
    reject: bool
    alpha: float
    phi_hat: float
    negative_statistic: bool = False


@dataclass(frozen=True)
class TestConfig:
    """Pipeline settings for run_test."""

    penalty_kind: str = "scad"
    penalty_a: float | None = None
    alpha: float = 0.05
    lambda_hat: float | None = None
    lambda_grid: tuple | None = None
    gic_grid_size: int = 20
    gic_min_ratio: float = 0.05
    lasso: LassoConfig = field(default_factory=LassoConfig)
    lla: LlaConfig = field(default_factory=LlaConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must be in (0, 1)")
        if self.penalty_kind not in ("scad", "mcp", "l1"):
            raise InputError(f"unknown penalty: {self.penalty_kind!r}")
        if self.lambda_hat is not None and self.lambda_hat <= 0:
            raise InputError("lambda_hat must be positive")

    def penalty(self, lam):
        maker = {"scad": scad, "mcp": mcp, "l1": l1}[self.penalty_kind]
        if self.penalty_a is None or self.penalty_kind == "l1":
            return maker(lam)
        return maker(lam, self.penalty_a)


@dataclass
class RunResult:
    """Everything run_test produces: the three reports plus the fits
    and tuning values behind them."""

    wald: TestReport
    score: TestReport
    lrt: TestReport
    lambda_hat: float
    lambda_lasso: float
    fit_full: object
    fit_reduced: object
    phi_full: float
    phi_reduced: float

    @property
    def reports(self):
        return {"wald": self.wald, "score": self.score, "lrt": self.lrt}


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except SolverError as err:
        err.args = (f"stage {name}: {err.args[0]}",) + err.args[1:]
        raise


def _reduced_grid(family, data, hyp, config):
    if config.lambda_grid is not None:
        return np.asarray(config.lambda_grid, dtype=np.float64)
    g = gradient(family, data, np.zeros(data.p))
    mask = np.ones(data.p, dtype=bool)
    mask[hyp.M] = False
    if data.has_intercept:
        mask[0] = False
    lam_max = float(np.max(np.abs(g[mask]))) if mask.any() else 1.0
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, config.gic_min_ratio * lam_max,
                        config.gic_grid_size)


def run_test(family, data, hyp, config=None):
    """Run the full testing pipeline and return a RunResult.

    Stages: cross-validated l1 initializer, reduced-model fits along a
    lambda grid, tuning by generalized information criterion, full and
    reduced folded-concave fits at the chosen lambda, then the three
    statistics with their matched dispersion estimates.
    """
    config = config or TestConfig()
    if np.any(hyp.M >= data.p):
        raise InputError("hypothesis indexes past the design matrix")
    if data.has_intercept and np.any(hyp.M == 0):
        raise InputError("the intercept cannot be tested")

    lam_lasso, _ = _stage("initializer-cv", cv_select, family, data, config.lasso)
    init = _stage("initializer", fit_lasso, family, data, lam_lasso, config.lasso)

    if config.lambda_hat is not None:
        lam_hat = float(config.lambda_hat)
        fit_red = _stage("reduced-fit", lla_reduced, family, data, hyp,
                         config.penalty(lam_hat), init.beta, config.lla)
    else:
        grid = _reduced_grid(family, data, hyp, config)
        fits = [_stage(f"reduced-path[{i}]", lla_reduced, family, data, hyp,
                       config.penalty(lam), init.beta, config.lla)
                for i, lam in enumerate(grid)]
        lam_hat, idx, _ = gic_select(family, data, fits)
        fit_red = fits[idx]

    fit_full = _stage("full-fit", lla_full, family, data, hyp.M,
                      config.penalty(lam_hat), init.beta, config.lla)

    phi_full, _ = dispersion_estimate(family, data, fit_full, hyp.M)
    phi_red, _ = dispersion_estimate(family, data, fit_red, hyp.M)

    r = hyp.r
    crit = chisq_upper_quantile(config.alpha, r)

    t_w = wald_statistic(family, data, fit_full, hyp, phi_full)
    t_s = score_statistic(family, data, fit_red, hyp, phi_red)
    t_l, neg = lrt_statistic(family, data, fit_full, fit_red, phi_full)
    if neg:
        warnings.warn("negative likelihood ratio statistic; fits may "
                      "have selected different supports")

    def report(kind, value, negative=False):
        p = 1.0 if negative else float(central_chisq_sf(value, r))
        return TestReport(statistic_kind=kind, value=value, dof=r, p_value=p,
                          reject=bool(value > crit), alpha=config.alpha,
                          phi_hat=phi_full if kind != "score" else phi_red,
                          negative_statistic=negative)

    return RunResult(
        wald=report("wald", t_w),
        score=report("score", t_s),
        lrt=report("lrt", t_l, neg),
        lambda_hat=lam_hat, lambda_lasso=lam_lasso,
        fit_full=fit_full, fit_reduced=fit_red,
        phi_full=phi_full, phi_reduced=phi_red)


def power_approx(family, data, beta_star, hyp, phi_star=1.0, alpha=0.05):
    """Local power of the tests at a fixed alternative.

    The noncentrality is n (C beta*_M - t)' Psi^{-1} (C beta*_M - t) / phi*
    with Psi the M-block constraint covariance taken from the inverse
    information over M union the true support.  Returns (power, nu).
    """
    beta_star = np.asarray(beta_star, dtype=np.float64)
    S = support_set(beta_star, hyp.M, data.has_intercept)
    act = _active(data, hyp.M, S)
    K = hessian_block(family, data, beta_star, act)
    pos = np.searchsorted(act, hyp.M)
    Cb = np.zeros((hyp.r, act.size))
    Cb[:, pos] = hyp.C
    Z = cho_solve(_chol(K, "information matrix"), Cb.T)
    Psi = Cb @ Z
    h = hyp.C @ beta_star[hyp.M] - hyp.t
    z = cho_solve(_chol(Psi, "constraint covariance"), h)
    nu = float(data.n * (h @ z) / phi_star)
    crit = chisq_upper_quantile(alpha, hyp.r)
    power = 1.0 - noncentral_chisq_cdf(crit, hyp.r, nu)
    return float(power), nu
