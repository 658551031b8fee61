"""Exception types shared across the toolkit."""


class RainsynthError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(RainsynthError, ValueError):
    """An argument violates a documented precondition."""


class IllConditionedInversionError(RainsynthError):
    """Transmission values are too small for a stable analytic inversion."""


class SampleIOError(RainsynthError, OSError):
    """A referenced sample file is missing or unreadable."""


class SampleCorruptionError(RainsynthError):
    """A sample file on disk no longer matches its recorded checksum."""
