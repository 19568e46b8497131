"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes: configuration
problems exit with 2, model-consistency problems with 3 and numerical
failures with 4.
"""


class DfrsError(Exception):
    """Base class for all package errors."""


class ConfigError(DfrsError):
    """Invalid or inconsistent experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelError(DfrsError, ValueError):
    """Inputs violate a model precondition."""


class OutOfDomain(ModelError):
    pass


class BadSnapshot(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class OutOfRange(ModelError):
    pass


class DivisibilityError(ModelError):
    pass


class WrongCount(ModelError):
    pass


class NoClosedForm(ModelError):
    pass


class WireFormatError(DfrsError, ValueError):
    """A serialized sensor message cannot be decoded."""


class MalformedHeader(WireFormatError):
    pass


class WrongPayloadLength(WireFormatError):
    pass


class NumericalError(DfrsError, ArithmeticError):
    """A numerical routine could not produce a trustworthy value."""


class NonRegularPdf(NumericalError):
    pass


class NonMonotoneDither(NumericalError):
    pass
