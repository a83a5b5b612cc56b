"""Exception types shared across the package."""


class IonsqError(Exception):
    """Base class for all package-specific errors."""


class ConvergenceError(IonsqError):
    """An iterative solver failed to reach its tolerance.

    Carries the achieved error estimate in ``residual`` when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BudgetExceededError(IonsqError):
    """Requested Hilbert-space dimension exceeds the configured budget."""


class CutoffLeakageError(IonsqError):
    """Fock-cutoff leakage check failed after applying a unitary."""

    def __init__(self, message, leakage=None, slot=None):
        super().__init__(message)
        self.leakage = leakage
        self.slot = slot


class InsensitiveObservableError(IonsqError):
    """The measured observable does not respond to the imprinted phase."""
