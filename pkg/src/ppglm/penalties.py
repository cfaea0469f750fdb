"""Folded-concave penalty functions (SCAD, MCP) and the l1 reference.

A folded-concave penalty here is a function p_lambda on [0, inf) that
is zero at zero, nondecreasing, concave, has derivative at least
a1*lambda on (0, a2*lambda], and derivative exactly zero beyond
a*lambda.  The l1 penalty satisfies everything except the flat tail
and is kept as the comparison case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = ["PenaltySpec", "scad", "mcp", "l1", "derivative", "value",
           "verify_axioms", "AxiomReport"]

SCAD_DEFAULT_A = 3.7
MCP_DEFAULT_A = 3.0


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family with its tuning constants.

    Attributes
    ----------
    kind : str
        "scad", "mcp" or "l1".
    lam : float
        Regularization level, >= 0.
    a : float
        Concavity parameter (> 2 for SCAD, > 1 for MCP, +inf for l1).
    """

    kind: str
    lam: float
    a: float

    def __post_init__(self):
        if self.lam < 0:
            raise InputError("lambda must be nonnegative")
        if self.kind == "scad":
            if not self.a > 2:
                raise InputError("SCAD requires a > 2")
        elif self.kind == "mcp":
            if not self.a > 1:
                raise InputError("MCP requires a > 1")
        elif self.kind != "l1":
            raise InputError(f"unknown penalty kind {self.kind!r}")

    # Constants from the penalty axioms: derivative >= a1*lam on
    # (0, a2*lam]; a0 = min(1, a2) is the initializer radius scale.
    @property
    def a1(self):
        return 1.0 - 1.0 / self.a if self.kind == "mcp" else 1.0

    @property
    def a2(self):
        return np.inf if self.kind == "l1" else 1.0

    @property
    def a0(self):
        return min(1.0, self.a2)

    def with_lambda(self, lam):
        return PenaltySpec(self.kind, float(lam), self.a)


def scad(lam, a=SCAD_DEFAULT_A):
    return PenaltySpec("scad", float(lam), float(a))


def mcp(lam, a=MCP_DEFAULT_A):
    return PenaltySpec("mcp", float(lam), float(a))


def l1(lam):
    return PenaltySpec("l1", float(lam), np.inf)


def _check_t(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise InputError("penalty argument t must be nonnegative")
    return t


def derivative(spec, t):
    """p'_lambda(t) for scalar or array t >= 0."""
    t = _check_t(t)
    lam, a = spec.lam, spec.a
    if spec.kind == "l1":
        out = np.full_like(t, lam)
    elif spec.kind == "mcp":
        out = np.maximum(lam - t / a, 0.0)
    else:
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    return float(out) if out.ndim == 0 else out


def value(spec, t):
    """p_lambda(t) = integral of the derivative, in closed form."""
    t = _check_t(t)
    lam, a = spec.lam, spec.a
    if spec.kind == "l1":
        out = lam * t
    elif spec.kind == "mcp":
        out = np.where(t <= a * lam, lam * t - t * t / (2.0 * a), 0.5 * a * lam * lam)
    else:
        mid = lam * lam + (a * lam * (t - lam) - 0.5 * (t * t - lam * lam)) / (a - 1.0)
        out = np.where(t <= lam, lam * t,
                       np.where(t <= a * lam, mid, 0.5 * (a + 1.0) * lam * lam))
    return float(out) if out.ndim == 0 else out


@dataclass
class AxiomReport:
    """Outcome of the four folded-concave axioms on a grid.

    Booleans follow the axiom order: (i) nondecreasing value with
    nonincreasing derivative, (ii) positive slope at zero,
    (iii) slope lower bound a1*lam on (0, a2*lam], (iv) flat tail
    beyond a*lam.  ``margins`` carries the raw numbers behind each
    verdict.
    """

    monotone_concave: bool
    positive_slope_at_zero: bool
    slope_lower_bound: bool
    flat_tail: bool
    margins: dict

    @property
    def all_pass(self):
        return (self.monotone_concave and self.positive_slope_at_zero
                and self.slope_lower_bound and self.flat_tail)


def verify_axioms(spec, grid):
    """Check the four penalty axioms on a sorted nonnegative grid."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise InputError("grid must be nonempty")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise InputError("grid must be sorted and nonnegative")

    lam, a = spec.lam, spec.a
    vals = value(spec, grid)
    ders = derivative(spec, grid)

    tol = 1e-12
    monotone = bool(np.all(np.diff(vals) >= -tol)) and bool(np.all(np.diff(ders) <= tol))
    slope0 = derivative(spec, 0.0)
    at_zero = bool(slope0 >= spec.a1 * lam - tol)

    in_band = (grid > 0) & (grid <= spec.a2 * lam)
    band_min = float(ders[in_band].min()) if np.any(in_band) else np.inf
    lower = bool(band_min >= spec.a1 * lam - tol)

    if np.isfinite(a):
        tail_pts = np.concatenate([grid[grid >= a * lam], [a * lam, 1.5 * a * lam]])
        tail_max = float(np.max(np.abs(derivative(spec, tail_pts))))
        flat = bool(tail_max <= tol)
    else:
        # no finite a*lam: the derivative never vanishes (l1 case)
        tail_max = float(ders[-1])
        flat = False

    margins = {
        "min_value_step": float(np.min(np.diff(vals))) if grid.size > 1 else 0.0,
        "max_derivative_step": float(np.max(np.diff(ders))) if grid.size > 1 else 0.0,
        "slope_at_zero": float(slope0),
        "band_min_slope": band_min,
        "tail_max_slope": tail_max,
        "a1_lambda": spec.a1 * lam,
    }
    return AxiomReport(monotone, at_zero, lower, flat, margins)
