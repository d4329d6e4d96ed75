"""Exception hierarchy shared across the package."""


class MixgridError(Exception):
    """Base class for all package errors."""


class DimensionError(MixgridError, ValueError):
    """Array shapes do not agree."""


class DatasetParseError(MixgridError, ValueError):
    """A dataset file could not be parsed.

    The offending (1-based) line number is kept on ``line`` when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(MixgridError):
    """Base class for failures of the simplex least-squares solver."""


class Infeasible(SolverError):
    """The equality constraints do not intersect the probability simplex."""

    def __init__(self, message, gap=None):
        self.gap = gap
        super().__init__(message)


class NonConvergence(SolverError):
    """The iteration budget ran out before the KKT residual reached tolerance."""

    def __init__(self, message, kkt_residual=None):
        self.kkt_residual = kkt_residual
        super().__init__(message)
