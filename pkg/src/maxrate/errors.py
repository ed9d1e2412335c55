"""Exception types shared across the package."""


class MaxrateError(Exception):
    pass


class InsufficientAtoms(MaxrateError, ValueError):
    """Operation needs more atoms than the configuration provides."""


class EigensolverFailure(MaxrateError, RuntimeError):
    """Iterative eigensolver did not reach the requested residual."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class QuadratureFailure(MaxrateError, RuntimeError):
    """Spherical-cap quadrature failed its self-consistency check."""


class ModeOutOfRange(MaxrateError, ValueError):
    """Analytic mode index outside its validity window."""


class UnsupportedKernel(MaxrateError, TypeError):
    """Kernel variant not accepted by this operation."""


class ArchiveError(MaxrateError, RuntimeError):
    """Run archive on disk is missing or inconsistent."""


class ConfigError(MaxrateError, ValueError):
    """Run configuration failed validation."""
