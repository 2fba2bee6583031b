"""Exception hierarchy shared across the package."""


class TransferError(Exception):
    """Base class for every error raised by lintransfer."""


class DimensionMismatch(TransferError, ValueError):
    pass


class TooFewSamples(TransferError, ValueError):
    pass


class RankDeficient(TransferError, ValueError):
    pass


class NonSPDGram(TransferError, ValueError):
    pass


class DomainError(TransferError, ValueError):
    pass


class ZeroVector(TransferError, ValueError):
    pass


class DegenerateDirection(TransferError, ValueError):
    """Raised when A^k x vanishes so the test statistic is undefined."""


class CurveTooShort(TransferError, ValueError):
    pass


class EmptyInput(TransferError, ValueError):
    pass


class ConstantSeries(TransferError, ValueError):
    pass


class SchemaMismatch(TransferError, ValueError):
    pass


class ParseError(TransferError, ValueError):
    """A malformed CSV cell. Carries the 1-based data row and column name."""

    def __init__(self, row, column, reason):
        self.row = row
        self.column = column
        self.reason = reason
        super().__init__(f"row {row}, column {column!r}: {reason}")


class NoPositiveLabels(UserWarning):
    """Every calibration sample favours the target model."""


class DivergentStep(UserWarning):
    """Step size at or beyond 2 / lambda_max: gradient descent diverges."""
