"""Exception types shared across the package.

The CLI maps these onto process exit codes, so user-facing failures should
raise one of them rather than a bare ``ValueError``.
"""


class ConfigError(ValueError):
    """Invalid configuration or shape arithmetic."""


class DataError(ValueError):
    """Malformed or out-of-range input data."""


class NumericalError(FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""
