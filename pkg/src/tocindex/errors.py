"""Exception types shared across the toolkit."""

from __future__ import annotations


class TocIndexError(Exception):
    """Base class for all toolkit errors.

    ``stage`` is filled in by the pipeline when it knows which processing
    stage raised the error; it stays ``None`` for errors raised directly.
    """

    stage: str | None = None


class MalformedInput(TocIndexError):
    """Input bytes or JSON do not form a readable document or index."""


class InvariantViolation(TocIndexError):
    """Structurally readable input breaks a documented data invariant."""


class NoRecognizableStructure(TocIndexError):
    """No grammar rule matched enough lines to produce a single heading."""

    def __init__(self, message: str, diagnostics: tuple[str, ...] = ()):
        super().__init__(message)
        self.diagnostics = diagnostics


class NoTocFound(TocIndexError):
    """The classifier labeled no page of the document as a ToC page."""


class UnboundPlaceholder(TocIndexError):
    """A prompt template references a placeholder with no bound value."""


class TransportError(TocIndexError):
    """The chat-completion endpoint could not be reached or misbehaved."""


class EmptyReply(TocIndexError):
    """The model returned an empty message."""


class SchemaViolation(TocIndexError):
    """The model never produced JSON matching the index schema."""


class NotFound(TocIndexError):
    """The store has no entry for the requested document id."""


class StorageCorrupt(TocIndexError):
    """Stored bytes no longer match the digests recorded at write time."""
