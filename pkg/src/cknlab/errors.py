"""Exception hierarchy.

Three families matter to callers: validation errors (bad problem
parameters, CLI exit code 2), numeric errors (quadrature/fit/structure
failures, exit code 3) and non-convergence (exit code 4).
"""


class CknError(Exception):
    """Base class for all package errors."""


class ValidationError(CknError):
    """Raised when raw problem parameters violate the admissible range."""


class DimensionTooSmall(ValidationError):
    pass


class WeightOutOfRange(ValidationError):
    pass


class OffsetOutOfRange(ValidationError):
    pass


class PowerOutOfRange(ValidationError):
    pass


class NonPositiveMass(ValidationError):
    pass


class NegativeCoefficient(ValidationError):
    pass


class RegimeMismatch(CknError):
    """Mass-critical threshold branch requested with q != q_c."""


class NumericError(CknError):
    """Base class for runtime numeric failures."""


class BadGridSpec(ValidationError):
    pass


class NonIntegrable(NumericError):
    """Weight is not locally integrable near the origin for bounded profiles."""


class ShiftTooLarge(NumericError):
    pass


class CutoffOutsideWindow(NumericError):
    pass


class QuadratureDivergence(NumericError):
    """Grid window too small for the profile tail."""


class BranchBoundary(NumericError):
    """Asymptotics case discriminant is within tolerance of zero."""


class PoorFit(NumericError):
    """Log-log regression quality below the acceptance threshold."""


class OutsideStrip(ValidationError):
    """(a, b) outside the open admissible strip."""


class DegenerateCoefficients(NumericError):
    """Fiber map lacks critical structure (e.g. vanishing critical norm)."""


class ScanWindowExhausted(NumericError):
    """Fiber scan window did not bracket the asymptotic sign pattern."""


class BranchAbsent(NumericError):
    """Requested fiber branch does not exist for this profile/regime."""


class NoPositiveInterval(NumericError):
    """Envelope function is nonpositive everywhere (coefficient too large)."""


class DegenerateProfile(NumericError):
    pass


class ZeroProfile(NumericError):
    pass


class NoConvergence(CknError):
    """Solver hit its iteration budget before meeting all tolerances."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StructureViolation(NumericError):
    """Fiber analysis contradicts the expected regime structure."""

    def __init__(self, message, fiber_report=None):
        super().__init__(message)
        self.fiber_report = fiber_report


class PostconditionViolated(NumericError):
    """A logged inequality of the wrapped operation failed to hold."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload
