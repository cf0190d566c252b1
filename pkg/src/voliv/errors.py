"""Exception hierarchy shared by every module."""


class VolivError(Exception):
    """Base class for library errors."""


class DomainError(VolivError, ValueError):
    """An argument lies outside the domain of the function."""


class UnsupportedDegreeError(DomainError):
    pass


class UnsupportedScalingError(DomainError):
    pass


class StripError(DomainError):
    """The Fourier contour left the analyticity strip of the characteristic function."""


class BracketError(VolivError, ValueError):
    pass


class BoundsError(VolivError, ValueError):
    """A price violates a no-arbitrage bound.

    ``bound`` is ``"lower"`` or ``"upper"``.
    """

    def __init__(self, message: str, bound: str):
        super().__init__(message)
        self.bound = bound


class AccuracyError(VolivError, ArithmeticError):
    """Quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are kept on the exception.
    """

    def __init__(self, message: str, estimate, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class PropagationError(VolivError, ArithmeticError):
    """A non-finite intermediate value would propagate into the result."""


class SmileQualityError(VolivError):
    pass


class InsufficientDataError(VolivError, ValueError):
    pass


class PowerLawError(VolivError, ValueError):
    """Preconditions of the power-law regression are not met.

    ``reason`` is one of ``"count"``, ``"ordering"``, ``"sign"``, ``"zero"``.
    """

    reason = "power-law"

    def __init__(self, message: str):
        super().__init__(message)


class CountError(PowerLawError):
    reason = "count"


class OrderingError(PowerLawError):
    reason = "ordering"


class SignError(PowerLawError):
    reason = "sign"


class ZeroValueError(PowerLawError):
    reason = "zero"


class SchemaError(VolivError, ValueError):
    """Input file does not follow the expected schema."""

    def __init__(self, message: str, column: str | None = None, row: int | None = None):
        super().__init__(message)
        self.column = column
        self.row = row
