"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A caller-supplied argument violates a precondition."""


class CompatibilityError(ValueError):
    """Source terms do not sum to zero, so no solution exists."""


class FormatError(ValueError):
    """An input file does not match the expected layout."""


class NumericalFailureError(RuntimeError):
    """A factorization or eigensolve broke down.

    Carries the subdomain id (or pair) where the failure occurred.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class ConstraintRankError(ValueError):
    """Constraint rows of a subdomain are linearly dependent."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows


class ConfigurationError(ValueError):
    """The coarse problem is singular; initial constraints are missing."""


class InternalConsistencyError(RuntimeError):
    """An internal invariant failed (indicates a bug, not bad input)."""


class NonConvergenceError(RuntimeError):
    """CG hit the iteration limit; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
