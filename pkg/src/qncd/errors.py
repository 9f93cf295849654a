"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data/validation
errors -> 2, numerical errors -> 3.
"""


class QncdError(Exception):
    """Base class for all package errors."""


class ValidationError(QncdError):
    """Invalid argument, malformed input data, or violated contract."""


class NonErgodicError(ValidationError):
    """Transition matrix is reducible or periodic; no unique stationary law."""


class QncdFormatError(ValidationError):
    """Malformed QNCD byte stream."""


class BadMagicError(QncdFormatError):
    pass


class VersionError(QncdFormatError):
    pass


class TruncatedError(QncdFormatError):
    pass


class ChecksumError(QncdFormatError):
    pass


class NumericalError(QncdError):
    """Numerical routine failed (non-convergence, non-finite values)."""


class ConvergenceError(NumericalError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation
