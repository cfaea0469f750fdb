"""Result containers shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FitResult:
    """Output of any fitting routine in this package.

    Attributes
    ----------
    beta : ndarray
        Full-length coefficient vector.  Coordinates produced by a
        proximal map are exact zeros.
    support : ndarray
        Sorted indices of nonzero penalized coordinates (tested and
        intercept coordinates never appear here).
    objective : float
        Final objective value of the producing solver.
    n_iter : int
        Iterations used by the outermost loop of the producer.
    converged : bool
    obj_trace : ndarray or None
        Per-iteration objective values when tracking was requested.
    extras : dict
        Producer-specific diagnostics (residuals, step counts, ...).
    """

    beta: np.ndarray
    support: np.ndarray
    objective: float
    n_iter: int
    converged: bool
    obj_trace: np.ndarray | None = None
    extras: dict = field(default_factory=dict)
