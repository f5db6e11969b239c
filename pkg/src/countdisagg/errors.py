"""Exception hierarchy.

Two families matter to callers: :class:`NumericalError` (the CLI maps it to
exit code 3) and :class:`InputError` (bad config or data files, exit code 2).
"""

from __future__ import annotations


class CountDisaggError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(CountDisaggError, ArithmeticError):
    pass


class InputError(CountDisaggError, ValueError):
    pass


class DiracDensityError(CountDisaggError, ValueError):
    """A Dirac law has no Lebesgue density."""


class NonFiniteIntegrand(NumericalError):
    pass


class SingularRisk(NumericalError):
    """Survival or distribution function too close to zero to form a hazard."""


class SingularAttendance(NumericalError):
    pass


class ZeroRateWithPositiveCount(NumericalError):
    pass


class NegativeRate(NumericalError):
    pass


class ZeroPopulation(NumericalError):
    pass


class DegenerateAttendance(NumericalError):
    """A journey type has zero attendance over the whole observation grid."""


class InsufficientIterations(NumericalError):
    pass


class DomainError(NumericalError):
    pass


class ConfigError(InputError):
    pass


class DataFormatError(InputError):
    """Malformed CSV input; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)
