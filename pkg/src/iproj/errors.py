"""Exception types shared across the package.

Two families matter to callers: ``InputError`` (and ``GridMismatchError``)
mark bad user input and map to CLI exit code 4; everything else derived
from ``IprojError`` marks a numeric or convention failure and maps to
exit code 5.
"""


class IprojError(Exception):
    """Base class for all package-specific errors."""


class GridMismatchError(IprojError):
    """Two objects that must share a grid do not."""


class InputError(IprojError):
    """User-supplied data violates a documented precondition."""


class DomainError(IprojError):
    """An operation was applied outside its mathematical domain."""


class IntegralOverflowError(IprojError):
    """An integral met +infinity on a set of positive mass.

    Deliberately distinct from arithmetic overflow: the integrand itself
    is infinite where the measure has mass, so no rescaling can help.
    """


class ProjectionUndefinedError(IprojError):
    """The constraint target is not absolutely continuous w.r.t. the input."""


class InfeasibleDirectionError(IprojError):
    """A one-dimensional tilt has no finite minimizer below the cap."""


class ConventionViolationError(IprojError):
    """A zero/zero division convention was violated (mass without support)."""


class OracleFailureError(IprojError):
    """The reference solver could not certify its own answer."""


class EngineStepError(IprojError):
    """A projection step failed; carries the (cycle, constraint) position."""

    def __init__(self, cycle: int, index: int, message: str):
        super().__init__(f"cycle {cycle}, constraint {index}: {message}")
        self.cycle = cycle
        self.index = index
