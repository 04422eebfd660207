"""Exception hierarchy shared by the solver modules."""


class SnapError(Exception):
    """Base class for all errors raised by snapopt."""


class FeasibilityError(SnapError):
    """A point violates the polyhedral constraints beyond tolerance."""

    def __init__(self, message, index=None, violation=None):
        super().__init__(message)
        self.index = index
        self.violation = violation


class ProjectionError(SnapError):
    """Euclidean projection did not converge (empty or ill-posed set)."""


class ContractError(SnapError):
    """A caller broke an operation precondition."""


class CapabilityError(SnapError):
    """The problem lacks an oracle required by the requested operation."""


class LineSearchError(SnapError):
    """Backtracking reached its step floor without sufficient descent."""


class ParameterError(SnapError):
    """Invalid configuration or problem parameters."""
