"""l1-penalized initial estimator and cross-validated lambda selection.

The initializer solves

    min_beta  loss(beta) + lambda_lasso * ||beta||_1

(intercept unpenalized when present) by proximal gradient with a
backtracking line search on the smooth part.  Columns are rescaled to
unit sample variance internally, which turns into per-coordinate
penalty multipliers lambda/s_j on the scaled problem, so the solved
objective is exactly the one above; coefficients are unscaled on
output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._backend import kernels
from .errors import ConvergenceError, InputError
from .families import Dataset, gradient, loss
from .results import FitResult

__all__ = ["LassoConfig", "fit_lasso", "cv_select", "default_lambda_grid"]


@dataclass(frozen=True)
class LassoConfig:
    """Path and solver settings for the initializer.

    ``lambda_grid`` of None means: build the default 50-point
    log-spaced grid from lambda_max down to 0.01*lambda_max at fit
    time.  The grid must be strictly descending when given.
    """

    lambda_grid: tuple | None = None
    folds: int = 10
    max_iter: int = 20000
    tol: float = 1e-8
    seed: int = 0
    track_objective: bool = False

    def __post_init__(self):
        if self.lambda_grid is not None:
            g = np.asarray(self.lambda_grid, dtype=np.float64)
            if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) >= 0):
                raise InputError("lambda_grid must be strictly descending and positive")
            object.__setattr__(self, "lambda_grid", tuple(g.tolist()))
        if self.folds < 2:
            raise InputError("folds must be >= 2")
        if self.tol <= 0:
            raise InputError("tol must be positive")


def default_lambda_grid(family, data, n_points=50, min_ratio=0.01):
    """Log-spaced grid from lambda_max = max_j |grad_j loss(0)| over
    penalized coordinates down to min_ratio * lambda_max."""
    g = gradient(family, data, np.zeros(data.p))
    if data.has_intercept:
        g = g[1:]
    lam_max = float(np.max(np.abs(g)))
    if lam_max <= 0:
        lam_max = 1.0  # degenerate gradient at zero; any grid works
    return np.geomspace(lam_max, min_ratio * lam_max, n_points)


def _scales(X, has_intercept):
    s = X.std(axis=0)
    s[s < 1e-12] = 1.0
    if has_intercept:
        s[0] = 1.0
    return s


def _penalty_vector(p, lam, scales, has_intercept):
    pen = lam / scales
    if has_intercept:
        pen[0] = 0.0
    return pen


def fit_lasso(family, data, lambda_lasso, config=None, beta0=None):
    """Solve the l1-penalized problem at a single lambda.

    Raises ConvergenceError (carrying the last iterate) when the
    iteration budget runs out.
    """
    if lambda_lasso <= 0:
        raise InputError("lambda_lasso must be positive")
    config = config or LassoConfig()
    X, n, p = data.X, data.n, data.p
    s = _scales(X, data.has_intercept)
    Xs = X / s
    pen = _penalty_vector(p, lambda_lasso, s, data.has_intercept)
    start = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=np.float64) * s

    beta_s, n_iter, status, obj, trace = kernels.prox_grad_wlasso(
        Xs, data.y, family.code, pen, start, config.max_iter, config.tol,
        config.track_objective)
    beta = beta_s / s
    if status != 0:
        raise ConvergenceError(
            f"lasso did not converge in {n_iter} iterations at "
            f"lambda={lambda_lasso:.6g}", last_iterate=beta,
            trace=trace if config.track_objective else None)

    nz = beta_s != 0.0
    if data.has_intercept:
        nz[0] = False
    return FitResult(beta=beta, support=np.flatnonzero(nz).astype(np.intp),
                     objective=obj, n_iter=n_iter, converged=True,
                     obj_trace=trace if config.track_objective else None,
                     extras={"lambda_lasso": float(lambda_lasso)})


def _path_on(family, sub, grid, config):
    """Warm-started descending path on one training set; returns the
    scaled-coefficient matrix (len(grid), p) in original coordinates."""
    s = _scales(sub.X, sub.has_intercept)
    Xs = sub.X / s
    start = np.zeros(sub.p)
    out = np.empty((len(grid), sub.p))
    for i, lam in enumerate(grid):
        pen = _penalty_vector(sub.p, lam, s, sub.has_intercept)
        beta_s, _, status, _, _ = kernels.prox_grad_wlasso(
            Xs, sub.y, family.code, pen, start, config.max_iter, config.tol, False)
        if status != 0:
            raise ConvergenceError(
                f"lasso path did not converge at lambda={lam:.6g}",
                last_iterate=beta_s / s)
        start = beta_s
        out[i] = beta_s / s
    return out


def cv_select(family, data, config=None):
    """Pick lambda_lasso by K-fold cross-validated deviance.

    Rows are shuffled once with the config seed and split into
    contiguous blocks.  The prediction error of a fold is the loss
    evaluated on its held-out rows.  Returns (lambda_lasso, cv_curve)
    with the curve aligned to the grid.
    """
    config = config or LassoConfig()
    if data.n < config.folds:
        raise InputError("need n >= folds")
    grid = (np.asarray(config.lambda_grid) if config.lambda_grid is not None
            else default_lambda_grid(family, data))

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(data.n)
    blocks = np.array_split(perm, config.folds)

    errors = np.zeros((config.folds, len(grid)))
    used = np.zeros(config.folds, dtype=bool)
    for f, holdout in enumerate(blocks):
        train = np.setdiff1d(perm, holdout, assume_unique=True)
        sub = data.subset(train)
        if family.kind == "logistic" and np.all(sub.y == sub.y[0]):
            warnings.warn(f"fold {f}: constant training response, skipping fold")
            continue
        val = data.subset(holdout)
        path = _path_on(family, sub, grid, config)
        for i in range(len(grid)):
            errors[f, i] = loss(family, val, path[i])
        used[f] = True

    if not used.any():
        raise InputError("every cross-validation fold was degenerate")
    curve = errors[used].mean(axis=0)
    best = int(np.argmin(curve))  # first minimum = largest lambda on ties
    return float(grid[best]), curve
