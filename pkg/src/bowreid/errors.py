"""Exception hierarchy shared across the package."""


class BowReidError(Exception):
    """Base class for all package errors."""


class ConfigError(BowReidError):
    """Bad experiment configuration (CLI exit code 1)."""


class DataError(BowReidError):
    """Bad or missing input data (CLI exit code 2)."""


class StageError(BowReidError):
    """Signature pipeline stages applied out of order."""
