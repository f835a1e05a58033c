"""Exception types raised across the package."""


class UnsupportedOrderError(ValueError):
    """Requested BDF order / delay count / stability case is not available."""


class ShapeError(ValueError):
    """Stencil inputs have the wrong length or inconsistent dimensions."""


class NoRealSolutionError(ValueError):
    """The multiplier system has no real solution at this coupling value."""

    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


class SolverFailure(RuntimeError):
    """An iterative solve did not reach its tolerance.

    ``residual`` holds the last residual norm, ``stage`` an optional label
    telling which sub-solve failed (e.g. ``"elastic"`` or ``"flow"``).
    """

    def __init__(self, message, residual=float("nan"), stage=None, mu=None):
        super().__init__(message)
        self.residual = residual
        self.stage = stage
        self.mu = mu


class NonConvergenceError(SolverFailure):
    """Krylov or power iteration ran out of iterations."""


class DivergenceError(RuntimeError):
    """A time integration produced non-finite or runaway states."""


class UnsupportedProblemError(ValueError):
    """The problem lacks data a formulation needs (e.g. the load derivative)."""
