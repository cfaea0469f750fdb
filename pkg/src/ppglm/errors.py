"""Exception types shared across the package."""


class PpglmError(Exception):
    """Base class for all package-specific errors."""


class InputError(PpglmError, ValueError):
    """Invalid user input (bad data, malformed hypothesis, bad config)."""


class SolverError(PpglmError, RuntimeError):
    """Base class for numerical failures inside a solver."""


class ConvergenceError(SolverError):
    """An iterative solver ran out of iterations.

    Carries the last iterate and any residual trace so callers can
    inspect how far the solve got.
    """

    def __init__(self, message, last_iterate=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


class NewtonError(SolverError):
    """An inner Newton system was singular beyond ridge repair."""


class SimulationError(SolverError):
    """Too many replications failed for the run to be trustworthy."""
