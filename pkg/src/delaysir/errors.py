"""Exception types shared across the package."""


class DelaySIRError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DelaySIRError, ValueError):
    """Parameters or arguments outside the region where a quantity is defined."""


class PrecisionLossError(DelaySIRError, ArithmeticError):
    """Series evaluation lost too many digits to cancellation."""


class NumericalError(DelaySIRError, ArithmeticError):
    """An iterative numerical procedure failed to converge."""


class StepSizeError(DelaySIRError, ValueError):
    """Integrator step size incompatible with the delays."""


class IntegrationError(DelaySIRError, RuntimeError):
    """The integrated state blew up or went negative."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class ConfigError(DelaySIRError, ValueError):
    """Malformed or invalid scenario configuration."""
