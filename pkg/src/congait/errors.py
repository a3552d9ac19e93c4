"""Shared exception base. Module-specific errors live next to the code that raises them."""


class CongaitError(Exception):
    """Base class for every domain error raised by this package."""
