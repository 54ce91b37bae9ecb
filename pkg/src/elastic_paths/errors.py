"""Exception types shared across the package."""


class ElasticPathsError(Exception):
    """Base class for all library errors."""


class AllZeroGradient(ElasticPathsError):
    """The gradient is identically zero; no descent direction exists."""


class NonFiniteIterate(ElasticPathsError):
    """An iterate became non-finite, usually because the step size is too large."""


class SingularSystem(ElasticPathsError):
    """A per-segment linear system is numerically singular."""


class TruncationBreakdown(ElasticPathsError):
    """The Taylor/Magnus truncation cannot meet the error tolerance on any
    admissible segment length."""


class NoEventInHorizon(ElasticPathsError):
    """No segment-boundary event was found within the search horizon."""


class NotPSD(ElasticPathsError):
    """A requested covariance specification is not positive semidefinite."""


class ParseError(ElasticPathsError):
    """A data file could not be parsed; carries row/column location."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        self.row = row
        self.col = col
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + loc)


class ShapeError(ElasticPathsError):
    """A data file does not have the expected shape."""


class DomainError(ElasticPathsError):
    """An argument is outside the mathematical domain of the map."""
