"""Exception hierarchy shared across the package."""


class SpectreError(Exception):
    """Base class for all package-specific failures."""


class ConfigurationError(SpectreError):
    """Invalid user-supplied configuration or parameters.

    Messages include the offending field path when the input came from a
    structured document.
    """


class UsageError(SpectreError):
    """API called with mismatched or inconsistent arguments."""


class PreconditionError(SpectreError):
    """A documented precondition of an operation does not hold."""


class OracleFailureError(SpectreError):
    """The direct eigenstructure computation did not converge."""


class UnsupportedOperatorError(SpectreError):
    """Operator outside the supported class for this operation.

    Raised for defective eigenstructure where spectral projections are
    required, and for zero eigenvalues where the half-plane pole layout
    degenerates.
    """


class PoleProximityError(SpectreError):
    """Shifted linear solve rejected: the shift is too close to a pole."""

    def __init__(self, message, shift=None, condition=None):
        super().__init__(message)
        self.shift = shift
        self.condition = condition


class DivergenceError(SpectreError):
    """Transform quadrature requested in a region where it diverges."""


class AccuracyUnattainableError(SpectreError):
    """A certified error bound was requested but cannot be produced."""


class AmplitudeUndefinedError(SpectreError):
    """Forcing frequency coincides with (or is excluded around) a resonance."""


class TheoremInapplicableError(SpectreError):
    """Closed-form route invalid because growing modes are present."""


class InsufficientDataError(SpectreError):
    """Too few samples to fit the requested model."""
