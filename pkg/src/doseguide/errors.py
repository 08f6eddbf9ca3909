"""Exception types shared across the package."""


class DoseGuideError(Exception):
    """Base class for all package errors."""


class ConfigError(DoseGuideError, ValueError):
    """Invalid configuration value. Carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class GPNumericsError(DoseGuideError, ArithmeticError):
    """Gram matrix factorization failed (degenerate data)."""


class ProtocolError(DoseGuideError, RuntimeError):
    """Operation called in a state that does not allow it."""


class SequencingError(ProtocolError):
    """Timestamps arrived out of order."""


class AlignmentError(DoseGuideError, ValueError):
    """Traces that must share timestamps do not."""


class CohortGenerationError(DoseGuideError, RuntimeError):
    """Could not draw a parameter set passing the screening simulation."""
