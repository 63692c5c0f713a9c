"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage/config problems -> 1, data problems
-> 2, numerical failures -> 3.
"""


class CorrjumpError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CorrjumpError):
    """Invalid run configuration or command usage."""

    exit_code = 1


class DataError(CorrjumpError):
    """Malformed, inconsistent, or degenerate input data."""

    exit_code = 2


class ParseError(DataError):
    """Schema violation while reading an input file."""


class CoverageError(DataError):
    """A firm lacks the data coverage the requested window needs."""


class UniverseError(DataError):
    """Fewer eligible firms than the sector universe requires."""


class NumericalError(CorrjumpError):
    """Quadrature, recursion, or root-finding failure."""

    exit_code = 3


class InversionError(NumericalError):
    """Equity-to-asset-value inversion did not converge."""


class EstimationError(NumericalError):
    """An optimizer failed to converge.

    Carries the best iterate found so callers can inspect or reuse it.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best
