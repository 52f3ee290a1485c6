"""Exception hierarchy shared by every module."""


class SovRatingError(Exception):
    """Base class for all package errors."""


class DataError(SovRatingError):
    """Problem with user-supplied data (maps to CLI exit code 3)."""


class UnknownSymbol(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingValue(ParseError):
    pass


class EmptySubset(DataError):
    pass


class InvalidK(SovRatingError, ValueError):
    pass


class ShapeMismatch(SovRatingError, ValueError):
    pass


class EmptyTrainingSet(DataError):
    pass


class EmptyNode(SovRatingError, ValueError):
    pass


class EmptyBranch(SovRatingError, ValueError):
    pass


class Degenerate(DataError):
    pass


class EmptyBackground(SovRatingError, ValueError):
    pass


class LengthMismatch(SovRatingError, ValueError):
    pass


class MismatchedDesign(SovRatingError, ValueError):
    pass


class InvariantViolation(SovRatingError):
    """An internal consistency check failed (maps to CLI exit code 4)."""
