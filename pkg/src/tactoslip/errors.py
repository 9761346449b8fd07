"""Exception hierarchy shared by every tactoslip module."""

from __future__ import annotations


class TactoslipError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(TactoslipError):
    """Shapes, dimensions or config values that cannot work together."""


class UsageError(TactoslipError):
    """An operation was called in the wrong phase or with mismatched sensors."""


class DataError(TactoslipError):
    """Pixel data outside the normalized [0, 1] range (or not finite)."""


class ArchiveError(TactoslipError):
    """A frame archive could not be parsed.

    ``code`` is a stable machine-readable tag, ``offset`` the byte offset
    at which parsing failed.
    """

    def __init__(self, code: str, offset: int, message: str):
        super().__init__(f"{code} at byte {offset}: {message}")
        self.code = code
        self.offset = offset
