"""Exception hierarchy shared across the package.

The CLI maps ConfigError (and network definition problems, which subclass
MemschedError) to exit code 2 and SchedulingError to exit code 3.
"""


class MemschedError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MemschedError):
    """Rejected run configuration: bad flags, bad values, undersized pool."""


class SchedulingError(MemschedError):
    """The run cannot proceed: memory demand exceeds what can be scheduled."""
