"""GLM families and the scaled negative log-likelihood loss.

The loss used everywhere in this package is

    loss(beta) = -(1/n) * { y'X beta - sum_i b(x_i' beta) }

where ``b`` is the cumulant function of a canonical exponential family.
Gradient and Hessian follow by differentiating through ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "GlmFamily",
    "Dataset",
    "gaussian",
    "logistic",
    "poisson",
    "family_from_name",
    "b_derivs",
    "loss",
    "gradient",
    "hessian_block",
    "poisson_clamp_count",
    "reset_poisson_clamp_count",
]

# Poisson linear predictors are clamped to this magnitude inside every
# cumulant evaluation: e^30 ~ 1e13 keeps early solver iterates finite
# without distorting any fit whose predictors stay in a sane range.
POISSON_THETA_MAX = 30.0

_N_POISSON_CLAMPS = 0


def poisson_clamp_count():
    """Number of Poisson linear-predictor entries clamped so far.

    Diagnostic only; never affects results for iterates inside the
    clamp range.
    """
    return _N_POISSON_CLAMPS


def reset_poisson_clamp_count():
    global _N_POISSON_CLAMPS
    _N_POISSON_CLAMPS = 0


def _count_poisson_clamps(n):
    global _N_POISSON_CLAMPS
    _N_POISSON_CLAMPS += int(n)


@dataclass(frozen=True)
class GlmFamily:
    """A canonical exponential family.

    Attributes
    ----------
    kind : str
        One of ``"gaussian"``, ``"logistic"``, ``"poisson"``.
    dispersion_known : bool
        True when the dispersion is fixed at 1 (logistic, poisson);
        False for gaussian, where it is estimated from residuals.
    selfconcordance : float
        The constant K with |b'''| <= K * b'' everywhere: 0 for
        gaussian, 1 for logistic and poisson.
    """

    kind: str
    dispersion_known: bool
    selfconcordance: float

    # integer tag used by the compiled kernels
    code: int = field(repr=False, default=-1)

    def __str__(self):
        return self.kind


_GAUSSIAN = GlmFamily("gaussian", False, 0.0, code=0)
_LOGISTIC = GlmFamily("logistic", True, 1.0, code=1)
_POISSON = GlmFamily("poisson", True, 1.0, code=2)


def gaussian():
    return _GAUSSIAN


def logistic():
    return _LOGISTIC


def poisson():
    return _POISSON


def family_from_name(name):
    """Look up a family by its lowercase name."""
    try:
        return {"gaussian": _GAUSSIAN, "logistic": _LOGISTIC, "poisson": _POISSON}[name]
    except KeyError:
        raise InputError(f"unknown family {name!r}; expected gaussian, logistic or poisson")


@dataclass
class Dataset:
    """Design matrix and response with light validation.

    When ``has_intercept`` is True, column 0 of ``X`` must be the
    all-ones intercept column; coefficient index 0 is then excluded
    from every penalty set and from the nuisance set M^c.
    """

    X: np.ndarray
    y: np.ndarray
    has_intercept: bool = False

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise InputError("X must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InputError("y must be 1-d with one entry per row of X")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InputError("need n >= 1 and p >= 1")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise InputError("X and y must be finite")
        if self.has_intercept and not np.all(X[:, 0] == 1.0):
            raise InputError("has_intercept=True requires column 0 of X to be all ones")
        self.X = X
        self.y = y

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def check_family(self, family):
        """Validate the response range for a family; raises InputError."""
        y = self.y
        if family.kind == "logistic":
            if not np.all((y == 0.0) | (y == 1.0)):
                raise InputError("logistic responses must be 0 or 1")
        elif family.kind == "poisson":
            if np.any(y < 0) or np.any(np.abs(y - np.round(y)) > 1e-8):
                raise InputError("poisson responses must be nonnegative integers")
        return self

    def subset(self, rows):
        """Dataset restricted to the given row indices."""
        return Dataset(self.X[rows], self.y[rows], self.has_intercept)


def b_derivs(family, theta):
    """Cumulant function and its first three derivatives at a scalar.

    Returns
    -------
    (b, b1, b2, b3) : tuple of floats
    """
    if not np.isfinite(theta):
        raise InputError("theta must be finite")
    th = float(theta)
    if family.kind == "gaussian":
        return 0.5 * th * th, th, 1.0, 0.0
    if family.kind == "logistic":
        if th > 0:
            b = th + np.log1p(np.exp(-th))
        else:
            b = np.log1p(np.exp(th))
        q = np.exp(-abs(th))
        mu = 1.0 / (1.0 + q) if th >= 0 else q / (1.0 + q)
        b2 = q / (1.0 + q) ** 2
        return b, mu, b2, b2 * (1.0 - 2.0 * mu)
    # poisson: saturate the exponent instead of overflowing
    if abs(th) > POISSON_THETA_MAX:
        _count_poisson_clamps(1)
        th = np.clip(th, -POISSON_THETA_MAX, POISSON_THETA_MAX)
    e = np.exp(th)
    return e, e, e, e


def _cumulant_and_mean(family, theta):
    """Vectorized (b(theta), b'(theta)) used by loss and gradient."""
    if family.kind == "gaussian":
        return 0.5 * theta * theta, theta
    if family.kind == "logistic":
        b = np.where(theta > 0, theta + np.log1p(np.exp(-np.abs(theta))),
                     np.log1p(np.exp(-np.abs(theta))))
        q = np.exp(-np.abs(theta))
        mu = np.where(theta >= 0, 1.0 / (1.0 + q), q / (1.0 + q))
        return b, mu
    clamped = np.abs(theta) > POISSON_THETA_MAX
    if np.any(clamped):
        _count_poisson_clamps(clamped.sum())
        theta = np.clip(theta, -POISSON_THETA_MAX, POISSON_THETA_MAX)
    e = np.exp(theta)
    return e, e


def _variance(family, theta):
    """Vectorized b''(theta)."""
    if family.kind == "gaussian":
        return np.ones_like(theta)
    if family.kind == "logistic":
        q = np.exp(-np.abs(theta))
        return q / (1.0 + q) ** 2
    clamped = np.abs(theta) > POISSON_THETA_MAX
    if np.any(clamped):
        _count_poisson_clamps(clamped.sum())
        theta = np.clip(theta, -POISSON_THETA_MAX, POISSON_THETA_MAX)
    return np.exp(theta)


def _check_beta(data, beta):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (data.p,):
        raise InputError(f"beta has shape {beta.shape}, expected ({data.p},)")
    return beta


def loss(family, data, beta):
    """Scaled negative log-likelihood -(1/n){y'X beta - 1'b(X beta)}."""
    beta = _check_beta(data, beta)
    theta = data.X @ beta
    b, _ = _cumulant_and_mean(family, theta)
    return float((b.sum() - data.y @ theta) / data.n)


def gradient(family, data, beta):
    """Gradient -(1/n) X'(y - mu(X beta)) of the loss."""
    beta = _check_beta(data, beta)
    theta = data.X @ beta
    _, mu = _cumulant_and_mean(family, theta)
    return data.X.T @ (mu - data.y) / data.n


def hessian_block(family, data, beta, cols):
    """Hessian sub-block (1/n) X_cols' diag(b''(X beta)) X_cols.

    ``cols`` is a nonempty array of column indices; the full Hessian is
    the special case cols = range(p).
    """
    beta = _check_beta(data, beta)
    cols = np.asarray(cols, dtype=np.intp)
    if cols.size == 0:
        raise InputError("cols must be nonempty")
    theta = data.X @ beta
    w = _variance(family, theta)
    Xc = data.X[:, cols]
    return (Xc.T * w) @ Xc / data.n
