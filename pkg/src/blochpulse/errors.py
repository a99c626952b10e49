"""Exception types shared across the package."""


class BlochPulseError(Exception):
    """Base class for all package errors."""


class ConvergenceError(BlochPulseError):
    """A numerical routine failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContractionError(BlochPulseError):
    """A Floquet eigenvalue exceeded unit modulus beyond roundoff."""


class InfeasibleScheduleError(BlochPulseError):
    """Schedule cannot reach the momentum target; carries the minimal N."""

    def __init__(self, message, minimal_n):
        super().__init__(message)
        self.minimal_n = minimal_n


class SortingAmbiguityError(BlochPulseError):
    """Two levels are indistinguishable for one ladder slot."""

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


class ExtrapolationError(BlochPulseError):
    """A path left the precomputed trace domain."""


class ClassificationError(BlochPulseError):
    """Crossing type could not be decided; carries fit residuals."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepSizeError(BlochPulseError):
    """A finite-difference Richardson check failed."""


class GridError(BlochPulseError):
    """Simulation grid cannot represent the requested state."""


class ScenarioError(BlochPulseError):
    """Scenario file is malformed or contains unknown keys."""
