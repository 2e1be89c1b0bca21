"""Exception types raised across the package."""


class NewSampError(Exception):
    """Base class for all errors raised by this package.

    Optimizer runs that fail part-way attach the partial trace as ``trace``.
    """

    trace = None


class InvalidInputError(NewSampError, ValueError):
    pass


class InvalidRankError(InvalidInputError):
    pass


class InvalidSizeError(InvalidInputError):
    pass


class DegenerateSpectrumError(NewSampError):
    """An eigenvalue that must be strictly positive is (numerically) zero."""


class NumericalFailureError(NewSampError):
    pass


class DivergenceError(NumericalFailureError):
    pass


class PoissonOverflowError(NewSampError, OverflowError):
    def __init__(self, index, value):
        super().__init__(f"Poisson linear predictor too large at sample {index}: {value:.6g} > 700")
        self.index = index
        self.value = value


class TheoryError(NewSampError):
    """A theoretical bound is not defined for the given inputs."""


class RequiresBoundedSetError(TheoryError):
    pass


class OutOfRegimeError(TheoryError):
    pass


class SampleTooSmallError(TheoryError):
    pass


class NoGuaranteeError(TheoryError):
    pass


class NoBoundError(TheoryError):
    pass


class InsufficientDataError(TheoryError):
    pass


class PhasesUndetectedError(TheoryError):
    pass


class ParseError(NewSampError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(NewSampError, ValueError):
    pass


class ConfigError(NewSampError, ValueError):
    pass
