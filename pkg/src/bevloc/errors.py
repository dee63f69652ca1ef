"""Exception types shared across the package."""


class BevlocError(Exception):
    """Base class for all bevloc-specific errors."""


class FormatError(BevlocError):
    """A file does not conform to its declared binary or text format."""


class ConfigError(BevlocError):
    """A configuration value is unknown, malformed, or out of range."""
