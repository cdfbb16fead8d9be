"""Exception hierarchy.

Two families: ``ValidationError`` for bad inputs (CLI exit code 2) and
``NumericalError`` for failures during a computation (CLI exit code 3).
"""


class TontineError(Exception):
    """Base class for all package errors."""


class ValidationError(TontineError, ValueError):
    """Input outside the domain of an operation."""


class NumericalError(TontineError, ArithmeticError):
    """A numerical procedure failed or left its representable range."""


class DomainError(ValidationError):
    pass


class OffGrid(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class NegativeProbability(ValidationError):
    pass


class RegimeViolation(ValidationError):
    pass


class ExhaustedTable(NumericalError):
    pass


class NumericOverflow(NumericalError):
    pass


class DegenerateConsumption(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass


class IllPosedPair(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class PositivityLoss(NumericalError):
    pass
