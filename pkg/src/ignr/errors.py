class IgnrError(Exception):
    """Base class for library errors."""


class InputDomainError(IgnrError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class NumericalError(IgnrError, ArithmeticError):
    """An iterative routine produced non-finite values or failed to converge."""


class CheckpointError(IgnrError):
    """A checkpoint or dataset file could not be parsed."""
