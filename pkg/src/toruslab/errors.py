"""Exception types raised by the toruslab package."""


class ToruslabError(Exception):
    """Base class for all package-specific errors."""


class NotUnimodular(ToruslabError):
    """Integer matrix has |det| != 1 and does not act on the torus bijectively."""


class NotPartiallyHyperbolic(ToruslabError, ValueError):
    """Spectrum is not real with three distinct moduli split 1 + 2 across 1."""


class InvalidShear(ToruslabError, ValueError):
    """Shear wave vector has a nonzero component on its own axis."""


class DegenerateIntersection(ToruslabError):
    """Forward and backward plane estimates are nearly coincident."""


class NumericalBlowup(ToruslabError):
    """Non-finite values appeared during an orbit computation."""


class PeriodTooLarge(ToruslabError):
    """Periodic point count exceeds the enumeration cap."""


class NewtonDiverged(ToruslabError):
    """Newton continuation failed to reach the residual tolerance."""


class NonHyperbolicOrbit(ToruslabError):
    """A periodic orbit has an eigenvalue modulus too close to 1."""


class NoSpectralGap(ToruslabError):
    """Some eigenvalue modulus is too close to 1 for the series to converge."""


class InversionDiverged(ToruslabError):
    """Fixed-point inversion of the conjugacy stopped contracting."""


class SegmentTooShort(ToruslabError, ValueError):
    """Leaf segment carries too few sample points for the requested check."""


class FrameFailure(ToruslabError):
    """Splitting estimation failed at some stage of a leaf integration."""


class NotOnLeaf(ToruslabError):
    """Second point does not lie on the integrated leaf of the first."""


class NonExpandingBundle(ToruslabError, ValueError):
    """Operation requires an expanding bundle (wu or su)."""


class NoPositiveExponents(ToruslabError):
    """Exponent triple has no positive entries."""


class IOFailure(ToruslabError):
    """Report or data file could not be written."""


class ConfigError(ToruslabError, ValueError):
    """Experiment configuration failed validation."""
