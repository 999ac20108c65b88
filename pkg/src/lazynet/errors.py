"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array arguments have incompatible or invalid shapes."""


class InvalidLabelError(ValueError):
    """Labels are not restricted to {-1, +1}."""


class IdxFormatError(ValueError):
    """IDX byte stream violates the format (magic, length or consistency)."""


class EmptyDatasetError(ValueError):
    """Operation received a dataset with no examples."""


class DegenerateGradientError(ValueError):
    """Input gradient is exactly zero, so the attack direction is undefined."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class ConfigError(ValueError):
    """Experiment configuration is invalid."""
