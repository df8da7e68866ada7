"""Exception types shared across the toolkit.

All validation errors derive from ValueError so callers can catch broadly;
the CLI maps them to exit codes.
"""


class InvalidParameterError(ValueError):
    """A parameter is outside its admissible range."""


class EmptyRegionError(ValueError):
    """A requested point region contains no points."""


class DomainError(ValueError):
    """A point lies outside the computational domain."""


class ShapeMismatchError(ValueError):
    """Two discrete objects live on incompatible grids or shapes."""


class WrongModelError(ValueError):
    """A check was requested for a cost model it does not apply to."""


class InsufficientDataError(ValueError):
    """Not enough data (e.g. refinement levels) to run a diagnostic."""


class MassMismatchError(ValueError):
    """Marginal masses differ; the transport problem is infeasible."""


class SeparationError(ValueError):
    """Observation window and candidate set are not separated."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
