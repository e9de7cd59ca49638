"""Exception types shared across the package."""


class InputError(ValueError):
    """Caller passed inconsistent shapes, sizes, or parameter values."""


class DataError(ValueError):
    """A dataset file is missing, malformed, or fails validation."""


class NumericError(RuntimeError):
    """A numeric routine failed to converge or produced unusable output."""


class SingularMatrixError(NumericError):
    """SPD factorization failed even at the maximum jitter level.

    ``pivot`` is the 1-based index of the leading minor that failed at the
    last attempt, as reported by the factorization.
    """

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class UnsupportedAssignmentError(RuntimeError):
    """The partition model has no out-of-sample assignment rule."""
