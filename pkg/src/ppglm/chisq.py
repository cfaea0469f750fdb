"""Chi-square tail probabilities and quantiles.

Central CDF values come from the regularized incomplete gamma
function.  The noncentral CDF is the Poisson mixture of central CDFs,
summed outward from the mode of the mixing weights with the weight
recurrence, truncated once the remaining mass is below 1e-12.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammainc, gammaincc

from .errors import InputError, SolverError

__all__ = ["central_chisq_cdf", "central_chisq_sf", "chisq_upper_quantile",
           "noncentral_chisq_cdf"]

_TAIL = 1e-12
_MAX_TERMS = 1_000_000


def central_chisq_cdf(x, df):
    """P(chi2_df <= x)."""
    if df <= 0:
        raise InputError("df must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def central_chisq_sf(x, df):
    """P(chi2_df > x), computed from the upper gamma tail directly."""
    if df <= 0:
        raise InputError("df must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, gammaincc(df / 2.0, np.maximum(x, 0.0) / 2.0), 1.0)
    return float(out) if out.ndim == 0 else out


def _central_pdf(x, df):
    if x <= 0:
        return 0.0
    h = df / 2.0
    return math.exp((h - 1.0) * math.log(x) - x / 2.0
                    - h * math.log(2.0) - math.lgamma(h))


def chisq_upper_quantile(alpha, df):
    """q with P(chi2_df > q) = alpha, by bisection plus Newton polish."""
    if not 0.0 < alpha < 1.0:
        raise InputError("alpha must be in (0, 1)")
    if df <= 0:
        raise InputError("df must be positive")
    target = alpha
    lo, hi = 0.0, max(float(df), 1.0)
    for _ in range(200):
        if central_chisq_sf(hi, df) <= target:
            break
        hi *= 2.0
    else:
        raise SolverError("quantile bracket expansion failed")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if central_chisq_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-8 * max(1.0, hi):
            break
    q = 0.5 * (lo + hi)
    for _ in range(8):
        f = central_chisq_sf(q, df) - target
        d = _central_pdf(q, df)
        if d <= 0.0:
            break
        step = f / d
        q_new = q + step
        if q_new <= lo or q_new >= hi:
            q_new = min(max(q_new, lo), hi)
        if abs(q_new - q) < 1e-14 * max(1.0, q):
            q = q_new
            break
        q = q_new
    return float(q)


def _poisson_window(half_nc):
    """Mixing weights covering all but 1e-12 of the Poisson(half_nc)
    mass, as (ks, ws) arrays built by recurrence from the mode."""
    k0 = int(half_nc)
    logw0 = -half_nc + (k0 * math.log(half_nc) if k0 else 0.0) - math.lgamma(k0 + 1)
    w0 = math.exp(logw0)
    ks = [k0]
    ws = [w0]
    total = w0
    w, k = w0, k0
    while total < 1.0 - _TAIL:
        k += 1
        w *= half_nc / k
        ks.append(k)
        ws.append(w)
        total += w
        if len(ks) > _MAX_TERMS:
            raise SolverError("noncentral mixture did not converge")
        if w < 1e-300 and k > half_nc:
            break
    w, k = w0, k0
    while total < 1.0 - _TAIL and k > 0:
        w *= k / half_nc
        k -= 1
        ks.append(k)
        ws.append(w)
        total += w
        if len(ks) > _MAX_TERMS:
            raise SolverError("noncentral mixture did not converge")
    return np.asarray(ks, dtype=np.float64), np.asarray(ws)


def noncentral_chisq_cdf(x, df, nc):
    """P(chi2_df(nc) <= x) via the Poisson mixture of central CDFs."""
    if df <= 0:
        raise InputError("df must be positive")
    if nc < 0:
        raise InputError("noncentrality must be nonnegative")
    if nc == 0.0:
        return central_chisq_cdf(x, df)
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ks, ws = _poisson_window(nc / 2.0)
    shapes = df / 2.0 + ks
    terms = gammainc(shapes[:, None], np.maximum(x_arr, 0.0)[None, :] / 2.0)
    out = ws @ terms
    out[x_arr <= 0] = 0.0
    return float(out[0]) if np.ndim(x) == 0 else out
