"""Exception hierarchy shared by every module."""


class CollapseLabError(Exception):
    """Base class for all errors raised by collapse_lab."""


class DomainError(CollapseLabError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ResolutionError(DomainError):
    """A length scale is too small to be resolved on the grid."""


class IncompatibleGridError(DomainError):
    """States defined on different grids were combined."""


class DegenerateInputError(DomainError):
    """Input carries no usable weight (e.g. all-zero coefficients)."""


class GridTooLargeError(DomainError):
    """The configuration-space grid exceeds the memory cap."""


class UnsupportedArityError(DomainError):
    """Operation is only defined for a different number of particles."""


class NumericalOverflowError(CollapseLabError, ArithmeticError):
    """Amplitudes became non-finite during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ZeroWeightError(CollapseLabError, ArithmeticError):
    """A collapse operator annihilated the state."""


class ClockOverrunError(CollapseLabError, RuntimeError):
    """More collapse events than the configured cap."""


class NodeError(CollapseLabError, ArithmeticError):
    """A Bohmian configuration sits on (or too close to) a wavefunction node."""


class UndefinedBranchError(CollapseLabError, ValueError):
    """A branch carries (numerically) zero weight inside its region."""
