"""Exception hierarchy shared by every module."""


class HardyMeanError(Exception):
    """Base class for all library errors."""


class ValidationError(HardyMeanError, ValueError):
    """Invalid input detected before any computation."""


class DSLParseError(ValidationError):
    """Syntax, unknown identifier, or arity error in a function expression."""

    def __init__(self, message, line=1, column=1, source=""):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{message} (line {line}, column {column})")


class DomainError(HardyMeanError, ArithmeticError):
    """A function was evaluated outside the set where it is defined."""


class RangeError(HardyMeanError, ArithmeticError):
    """A finite computation overflowed or left the image of a map."""


class QuadratureError(HardyMeanError):
    """The integration engine could not produce a value."""


class NonFiniteIntegrandError(QuadratureError):
    """Integrand returned inf at a point well inside the integration interval.

    ``sign`` is +1 or -1 for the infinite values seen, which lets callers
    distinguish an integrand that is infinite on a set of positive measure
    (e.g. ``ln f`` where ``f`` vanishes) from a genuine evaluation failure.
    """

    def __init__(self, t, value):
        self.t = float(t)
        self.value = float(value)
        self.sign = 1 if value > 0 else -1
        super().__init__(f"non-finite integrand value {value!r} at interior point t={t!r}")


class DivergenceError(HardyMeanError):
    """An integral needed to be finite but was diverged."""

    def __init__(self, message, result=None, side=None):
        self.result = result
        self.side = side
        super().__init__(message)
