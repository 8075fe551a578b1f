"""Exception types shared across the package."""


class MfsegoError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MfsegoError, ValueError):
    """Invalid configuration (bad bounds, bad counts, bad options)."""


class DomainError(MfsegoError, ValueError):
    """A point or argument lies outside its admissible domain."""


class StructureError(MfsegoError, ValueError):
    """A structural invariant is violated (e.g. non-nested designs)."""


class StateError(MfsegoError, RuntimeError):
    """An operation was called in a state where it is undefined."""


class FitError(MfsegoError, RuntimeError):
    """Model fitting failed; carries the offending condition number."""

    def __init__(self, message: str, condition_number: float = float("nan")):
        super().__init__(message)
        self.condition_number = condition_number


class SolverError(MfsegoError, RuntimeError):
    """The acquisition sub-solver failed on every start."""
