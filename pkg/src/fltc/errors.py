"""Exception types shared across the toolkit."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ConvergenceError(RuntimeError):
    """An iterative root search did not converge.

    ``bracket`` carries the offending interval so callers can report it.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class BracketMissError(ConvergenceError):
    """Eigenvalue bracketing failed; ``diagnostics`` holds oscillation counts."""

    def __init__(self, message, bracket=None, diagnostics=None):
        super().__init__(message, bracket)
        self.diagnostics = diagnostics or {}


class PointOutsideDomainError(ValueError):
    pass


class TailToleranceError(RuntimeError):
    """Truncated eigen-expansion cannot meet the requested tail tolerance."""

    def __init__(self, message, tail_bound=None):
        super().__init__(message)
        self.tail_bound = tail_bound


class IntegratorError(RuntimeError):
    pass


class GridMismatchError(ValueError):
    pass


class GridNotClosedError(ValueError):
    pass


class SignedMeasureError(ValueError):
    pass


class NonProbabilityRowError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass
