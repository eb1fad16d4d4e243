"""Exception hierarchy shared by every csbm module."""


class CSBMError(Exception):
    """Base class for all package errors."""


class DomainError(CSBMError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericalError(CSBMError, ArithmeticError):
    """An iterative routine failed to converge, or a quantity under/overflowed."""


class DataFormatError(DomainError):
    """Malformed network input (edge lists, label maps)."""


class ConfigError(CSBMError, ValueError):
    """Invalid or inconsistent run configuration."""
