"""Exception hierarchy shared by the toolkit.

``InvalidArgument`` subclasses ``ValueError`` so callers that only know the
stdlib conventions still catch it.
"""

from __future__ import annotations


class EmosynthError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(EmosynthError, ValueError):
    pass


class EmptyCorpusError(EmosynthError):
    pass


class StageEmpty(EmosynthError):
    """A stage reply could not be turned into any usable value."""

    def __init__(self, stage: str, message: str, raw: str | None = None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.raw = raw


class GatewayError(EmosynthError):
    """Transport failure that survived every retry."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class ProtocolError(EmosynthError):
    """The endpoint answered, but not with something we understand."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(message)
        self.payload = payload
