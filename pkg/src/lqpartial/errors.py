"""Exception types shared across the library."""


class LqPartialError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(LqPartialError):
    """Model matrices have inconsistent dimensions."""


class NotPositiveDefinite(LqPartialError):
    """A matrix required to be positive definite is not."""


class NotPSD(LqPartialError):
    """A matrix required to be positive semidefinite is not."""


class NonpositiveHorizon(LqPartialError):
    """The horizon T must be strictly positive."""


class ZeroMass(LqPartialError):
    """A density integrates to (numerically) zero."""


class RiccatiBlowup(LqPartialError):
    """An offline matrix path exceeded the blowup guard (bad model scaling)."""


class IdentityViolation(LqPartialError):
    """A cross-check identity between two computation routes failed."""


class SingularTilt(LqPartialError):
    """The tilted precision matrix is numerically singular."""


class Underflow(LqPartialError):
    """All tilted weights underflow; no finite log-space value exists."""


class CFLViolation(LqPartialError):
    """An explicit PDE step exceeds its stability bound."""


class NegativeDensity(LqPartialError):
    """A grid density went materially negative during a deterministic substep."""


class DomainTooNarrow(LqPartialError):
    """Tabulated density does not decay enough at the domain edges."""


class DegenerateWeights(LqPartialError):
    """Particle weights collapsed (effective sample size below threshold)."""


class ConfigError(LqPartialError):
    """A scenario configuration file is missing or malformed."""
