"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An input lies outside the domain of a function (e.g. log of a non-positive value)."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class DataFormatError(ValueError):
    """An input file does not follow the expected format."""
