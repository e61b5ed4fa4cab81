"""Exception hierarchy shared by every pipeline stage."""


class PedAlignError(Exception):
    """Base class for all errors raised by this package."""

    kind = "error"


class InvalidParameterError(PedAlignError, ValueError):
    kind = "invalid-parameter"


class DimensionError(PedAlignError, ValueError):
    kind = "dimension"


class EmptyRegionError(PedAlignError, ValueError):
    kind = "empty-region"


class ParseError(PedAlignError, ValueError):
    kind = "parse"


class ValidationError(PedAlignError, ValueError):
    kind = "validation"

    def __init__(self, message, offenders=()):
        self.offenders = list(offenders)
        if self.offenders:
            message = f"{message}: {'; '.join(self.offenders)}"
        super().__init__(message)


class GenerationError(PedAlignError, RuntimeError):
    kind = "generation"


class MissingInputError(PedAlignError, FileNotFoundError):
    kind = "missing-input"


class UndefinedMetricError(PedAlignError, ArithmeticError):
    kind = "undefined-metric"
