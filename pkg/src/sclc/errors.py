"""Exception hierarchy shared by every sclc module."""


class SclcError(Exception):
    """Base class for all errors raised by sclc."""


class DimensionMismatch(SclcError, ValueError):
    """Raised when operand shapes disagree."""


class SingularResolvent(SclcError):
    """Raised when -lambda is (numerically) an eigenvalue of the operator."""


class SpectrumInSector(SclcError):
    """Raised when an eigenvalue of -A lies inside the requested sector."""


class NotSectorial(SclcError):
    """Raised when an operator has no sectorial certificate at the angle asked for."""


class NotInvertible(SclcError):
    """Raised when an operation needs 0 in the resolvent set and it is not."""


class BranchConflict(SclcError):
    """Raised when a contour radius would cross the spectrum."""


class BadGeometry(SclcError, ValueError):
    """Raised for contour parameters that do not describe a valid path."""


class AngleConflict(SclcError, ValueError):
    """Raised when contour, function and sector angles are incompatible."""


class AngleOutOfRange(SclcError, ValueError):
    """Raised when an angle argument lies outside its admissible interval."""


class EmptyFamily(SclcError, ValueError):
    """Raised when an operator family has no members."""


class PerturbationTooLarge(SclcError):
    """Raised when a relative perturbation is too big for a Neumann series."""


class GridTooSmall(SclcError, ValueError):
    """Raised when a sampling grid cannot support the requested fit."""


class NoShiftFound(SclcError):
    """Raised when no admissible shift was found below the search cap."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class ShiftTooSmall(SclcError):
    """Raised when the perturbation operators are not contractions at this shift."""


class NotCommuting(SclcError):
    """Raised when a family member fails to commute with the base operator."""


class CoverageGap(SclcError, ValueError):
    """Raised when a partition of unity leaves part of [0, T] uncovered."""


class NestingViolation(SclcError, ValueError):
    """Raised when the chi/psi/phi support nesting is broken."""


class PatchTooWide(SclcError):
    """Raised when a local Neumann series would not converge on a patch."""

    def __init__(self, msg, nu=None):
        super().__init__(msg)
        self.nu = nu


class NotContractive(SclcError):
    """Raised when the patched fixed-point map is not a contraction."""

    def __init__(self, msg, norm=None):
        super().__init__(msg)
        self.norm = norm


class ConfigError(SclcError, ValueError):
    """Raised for malformed scenario or problem files."""
