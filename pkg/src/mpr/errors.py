"""Shared exception types for the retrieval-augmented answering engine."""

from __future__ import annotations


class MprError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MprError):
    """An embedding's dimensionality does not match what the consumer expects."""


class ZeroNormError(MprError):
    """A vector with zero L2 norm entered an operation that requires direction."""


class DuplicateIdError(MprError):
    """Two records in the same collection share an id."""


class EmptyIndexError(MprError):
    """A retrieval operation was attempted against an index with no records."""


class FormatError(MprError):
    """A binary index file is corrupt, truncated, or not an index file at all."""


class ParseError(MprError):
    """A dataset line failed to parse.  Carries the 1-based line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyDatasetError(MprError):
    """A dataset that must contain at least one record contains none."""


class ConfigError(MprError):
    """A configuration value is missing, malformed, or inconsistent."""


class EmptyRetrievalError(MprError):
    """A retrieval prompt was requested for an empty set of votes."""


class DomainError(MprError):
    """A numeric argument lies outside the function's documented domain."""


class EmptyLabelSetError(MprError):
    """Answer mapping was attempted against an empty label set."""


class GatewayUnavailable(MprError):
    """The remote model backend could not be reached or returned garbage."""


class ImageNotFound(MprError):
    """The model backend could not resolve an image reference."""


class MockParseError(MprError):
    """The mock generator received a retrieval segment it cannot parse."""
