"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A parameter record or pulse sequence violates its constraints."""


class BreakdownVoltageError(ValidationError):
    """Requested voltage exceeds the configured breakdown limit."""


class UndefinedEstimateError(ValueError):
    """An estimator has no defined value on the given data (for example
    a correlation normalization with zero mean counts)."""


class ProfileFormatError(ValueError):
    """A tabulated mode-profile file is malformed."""


class StreamFormatError(ValueError):
    """A time-tag stream file is malformed."""


class ConfigError(ValueError):
    """A run configuration file is malformed or inconsistent."""
