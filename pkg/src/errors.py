"""
Exception hierarchy for adsnull.
"""

from typing import Optional, Tuple


class AdsNullError(Exception):
    """Base class for all adsnull failures."""


class DomainError(AdsNullError, ValueError):
    """Input outside an operation's domain (slab, monotonicity, finite r)."""


class ShootingError(AdsNullError):
    """The blow-up endpoint could not be bracketed or solved for."""

    def __init__(self, message: str, bracket: Optional[Tuple[float, float]] = None):
        super().__init__(message if bracket is None else f"{message} (bracket {bracket[0]:.6g}..{bracket[1]:.6g})")
        self.bracket = bracket


class IntegrationError(AdsNullError):
    """An ODE march or particle push failed to complete."""


class ReflectionTimeError(AdsNullError, ValueError):
    """Momenta requested exactly at a reflection off infinity without choosing a side."""


class AxisRegularityError(AdsNullError):
    """The axis node lost regularity (r != 0 or a failed parity fit)."""


class GaugeError(AdsNullError):
    """The normalising gauge map could not be built."""


class TrappedSliceError(AdsNullError):
    """A trapped slice is not an asymptotically AdS data set; ``value`` is 2m/r where it was found."""

    def __init__(self, message: str, location: Optional[Tuple[float, float]] = None,
                 value: Optional[float] = None):
        super().__init__(message)
        self.location = location
        self.value = value


class DataFormatError(AdsNullError, ValueError):
    """Malformed data, config or profile text."""


class UsageError(AdsNullError, ValueError):
    """Bad command line."""
