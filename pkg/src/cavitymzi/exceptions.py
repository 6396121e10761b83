"""Exception and warning classes raised by cavitymzi."""


class CavityMZIError(Exception):
    """Base class for all package errors."""


class DimensionError(CavityMZIError, ValueError):
    """A Hilbert-space dimension exceeds the configured guard."""


class EmptyPostSelectionError(CavityMZIError, ValueError):
    """The post-selected atomic outcome has zero probability."""


class NonPhysicalStateError(CavityMZIError, ValueError):
    """A density matrix is not Hermitian or not positive semidefinite."""


class IntegrationError(CavityMZIError, RuntimeError):
    """The master-equation integrator failed its error or trace checks."""


class NoPreferredDirectionError(CavityMZIError, ValueError):
    """A Wigner map has no dominant gradient direction."""


class ImpossibleOutcomeError(CavityMZIError, ValueError):
    """Observed counts have zero likelihood at every candidate phase."""


class SpecError(CavityMZIError, ValueError):
    """A sweep specification failed validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        msgs = "; ".join(d.message for d in self.diagnostics if d.level == "error")
        super().__init__(msgs or "invalid sweep specification")


class TruncationWarning(UserWarning):
    """Probability weight on the highest retained Fock level is not negligible."""
