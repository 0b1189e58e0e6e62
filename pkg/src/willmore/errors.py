"""Exception types raised by the numerical machinery."""


class NumericalError(Exception):
    """Base class for controlled numerical failures (CLI exit code 2)."""


class ImmersionError(NumericalError):
    """Induced metric degenerate (smallest eigenvalue below threshold)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ChartRadiusError(NumericalError):
    """Requested chart point outside the domain's graph radius."""


class DivergenceError(NumericalError):
    """Newton iteration failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DomainExitError(NumericalError):
    """A geodesic left the cylinder on which the metric is defined."""


class InjectivityRadiusError(NumericalError):
    """Inverse exponential map requested outside its guaranteed ball."""


class NormalizationError(NumericalError):
    """Neumann complement solve lost its mean-zero normalization."""


class DegenerateCriticalPointError(NumericalError):
    """Path tracking started at a degenerate critical point."""
