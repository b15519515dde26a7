"""Exception types shared across the package."""


class IcapmError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(IcapmError, ValueError):
    """An array or file has incompatible dimensions."""


class AlignmentError(IcapmError, ValueError):
    """Return and instrument dates cannot be aligned into one sample."""


class ValidationError(IcapmError, ValueError):
    """Input data violates a container invariant (missing cells, bad dates)."""


class DomainError(IcapmError, ValueError):
    """Numerical input lies outside the mathematical domain of an operation."""


class DegenerateSeriesError(DomainError):
    """Series is constant, so higher sample moments are undefined."""


class ConfigurationError(IcapmError, ValueError):
    """Inconsistent model configuration or unknown named option."""


class EstimationError(IcapmError, RuntimeError):
    """Estimation or score computation could not proceed."""


class SimulationError(IcapmError, RuntimeError):
    """Simulated covariance path became explosive or non-factorizable."""
