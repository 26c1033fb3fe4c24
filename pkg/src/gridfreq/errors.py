"""Exception types shared across the package."""


class GridfreqError(Exception):
    """Base class for all errors raised by this package."""


class CaseParseError(GridfreqError):
    """A case document is structurally malformed."""


class CaseValidationError(GridfreqError):
    """A parsed case violates a model invariant."""


class UnknownAreaError(GridfreqError):
    """An area index or name does not exist in the partition."""


class NonConvergence(GridfreqError):
    """An iterative solver exhausted its iteration budget."""


class SingularJacobian(GridfreqError):
    """The Newton Jacobian is rank deficient at the current iterate."""


class DomainError(GridfreqError):
    """An input lies outside the domain of a cost function."""


class Infeasible(GridfreqError):
    """The dispatch target cannot be met within the input bounds."""


class AlgebraicDivergence(GridfreqError):
    """The per-step algebraic solve failed mid-trajectory."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ScenarioError(GridfreqError):
    """A scenario document is invalid or inconsistent with its case."""
