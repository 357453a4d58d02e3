"""Exception hierarchy shared by every module."""


class NowcastError(Exception):
    """Base class for all package errors."""


class DomainError(NowcastError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ShapeError(NowcastError, ValueError):
    """Inputs have incompatible lengths or are empty."""


class ConfigError(NowcastError, ValueError):
    """A configuration object or file is invalid."""


class FormatError(NowcastError, ValueError):
    """A data file does not follow its declared schema."""


class InfeasibleWindow(DomainError):
    """No fractional-error threshold exists for this window.

    Raised when the denominator of a smoothing threshold is non-positive or
    the first-difference bound becomes vacuous. Callers searching over
    windows treat it as an infinite threshold.
    """


class NoOverlap(NowcastError, ValueError):
    """Two series share no time points, so they cannot be compared."""
