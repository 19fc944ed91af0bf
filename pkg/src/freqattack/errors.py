"""Exception types shared across the package."""


class FreqAttackError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FreqAttackError, ValueError):
    """An argument has the wrong shape, range or value."""


class NumericalError(FreqAttackError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ConfigurationError(FreqAttackError):
    """An experiment configuration is inconsistent or unknown."""


class UndefinedBaselineError(FreqAttackError, ZeroDivisionError):
    """A relative difference was requested against a zero baseline."""
