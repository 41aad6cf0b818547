"""Exception hierarchy.

Data problems and numerical failures are kept apart so the CLI can map them
to distinct exit codes.
"""


class PvrfError(Exception):
    pass


class DataError(PvrfError, ValueError):
    """Invalid or unusable input data."""


class MissingColumnError(DataError):
    pass


class NonNumericTimeError(DataError):
    pass


class NonPositiveTimeError(DataError):
    pass


class InvalidStatusError(DataError):
    pass


class UnknownLevelError(DataError):
    pass


class MissingValueError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class NumericError(PvrfError, ArithmeticError):
    """A fit or computation failed numerically."""


class ConvergenceError(NumericError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class SeparationError(ConvergenceError):
    """Monotone likelihood: some coefficient diverges."""


class RankDeficientError(NumericError):
    pass
