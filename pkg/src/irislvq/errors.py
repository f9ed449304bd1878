"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class IrisError(Exception):
    """Base class for all library errors."""


class DecodeError(IrisError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(IrisError):
    pass


class ParameterError(IrisError, ValueError):
    pass


class DimensionError(IrisError, ValueError):
    pass


class NoPupilError(IrisError):
    pass


class LocalizationError(IrisError):
    """Raised when a localization stage has no acceptable circle.

    ``stage`` is one of ``"pupil"`` or ``"iris"``.
    """

    def __init__(self, stage: str, reason: str):
        super().__init__(f"localization failed at {stage} stage: {reason}")
        self.stage = stage
        self.reason = reason


class OutOfBoundsError(IrisError, IndexError):
    pass


class DataError(IrisError, ValueError):
    pass


class ConfigError(IrisError, ValueError):
    pass
