"""Exception hierarchy shared by every module.

The CLI maps each family onto an exit code: validation and parse problems
exit with 2, numerical problems with 3.
"""


class SupernormError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(SupernormError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class ParameterError(ValidationError):
    pass


class CacheMismatchError(ValidationError):
    pass


class MetricError(ValidationError):
    pass


class NumericalError(SupernormError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class ConfigurationError(NumericalError):
    """A factor configuration produced an unusable (nonpositive) factor."""


class RetryError(NumericalError):
    """A randomized generator exhausted its rejection budget."""


class StateError(SupernormError, RuntimeError):
    exit_code = 3
