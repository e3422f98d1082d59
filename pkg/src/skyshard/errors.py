"""Exception hierarchy shared by every skyshard component.

Errors that can cross the wire carry a ``wire_status`` byte; the server maps
exceptions to response status codes and clients map them back.
"""

from __future__ import annotations

# Response status bytes (first byte of every response payload).
STATUS_OK = 0
STATUS_NOT_FOUND = 1
STATUS_DECODE_FAILED = 2
STATUS_UNKNOWN_COLUMN = 3
STATUS_TYPE_MISMATCH = 4
STATUS_INDEX_MISSING = 5
STATUS_INTERNAL = 6
STATUS_BAD_REQUEST = 255


class SkyshardError(Exception):
    """Base class for all skyshard errors."""

    wire_status = STATUS_INTERNAL


class FormatError(SkyshardError):
    """A sealed-object byte stream violated the format."""

    wire_status = STATUS_DECODE_FAILED


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class Truncated(FormatError):
    pass


class SchemaParse(FormatError):
    pass


class NotFound(SkyshardError):
    wire_status = STATUS_NOT_FOUND


class UnknownDataset(NotFound):
    pass


class DatasetExists(SkyshardError):
    pass


class DecodeFailed(SkyshardError):
    wire_status = STATUS_DECODE_FAILED


class UnknownColumn(SkyshardError):
    wire_status = STATUS_UNKNOWN_COLUMN


class TypeMismatch(SkyshardError):
    wire_status = STATUS_TYPE_MISMATCH


class UnsupportedIndexType(TypeMismatch):
    """Equality indexing refused for this column type (Float64)."""


class IndexMissing(SkyshardError):
    wire_status = STATUS_INDEX_MISSING


class BadRequest(SkyshardError):
    wire_status = STATUS_BAD_REQUEST


class FrameTooLarge(BadRequest):
    pass


class EmptyNodeSet(SkyshardError):
    pass


class EmptyInput(SkyshardError):
    """Aggregate over zero rows where no identity value exists."""


class MixedVariants(SkyshardError):
    """Attempted to merge partial aggregate states of different variants."""


class HistogramParamMismatch(SkyshardError):
    """Histogram states with different (lo, hi, bins) cannot be merged."""


class SchemaMismatch(SkyshardError):
    pass


class OutOfBounds(SkyshardError):
    pass


class LengthMismatch(SkyshardError):
    pass


class NodeUnreachable(SkyshardError):
    def __init__(self, node_id: str, cause: str = ""):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f"node {node_id!r} unreachable" + (f": {cause}" if cause else ""))


class SubQueryFailed(SkyshardError):
    def __init__(self, object_name: str, cause: str):
        self.object_name = object_name
        self.cause = cause
        super().__init__(f"sub-query on {object_name!r} failed after retry: {cause}")


class IoError(SkyshardError):
    pass


class BadConfig(SkyshardError):
    pass


class AddressInUse(SkyshardError):
    pass


class ProtocolError(SkyshardError):
    """Malformed or unexpected bytes on an otherwise healthy connection."""

    wire_status = STATUS_BAD_REQUEST


class ParseError(SkyshardError):
    """Query text rejected; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(message)

    def caret_message(self) -> str:
        """Multi-line rendering with a caret pointing at the offending token."""
        line = self.text.replace("\n", " ")
        return f"{self.args[0]}\n{line}\n{' ' * self.position}^"


# Exceptions a server maps from a status byte back to, keyed by status.
STATUS_EXCEPTIONS: dict[int, type[SkyshardError]] = {
    STATUS_NOT_FOUND: NotFound,
    STATUS_DECODE_FAILED: DecodeFailed,
    STATUS_UNKNOWN_COLUMN: UnknownColumn,
    STATUS_TYPE_MISMATCH: TypeMismatch,
    STATUS_INDEX_MISSING: IndexMissing,
    STATUS_INTERNAL: SkyshardError,
    STATUS_BAD_REQUEST: BadRequest,
}


def exception_for_status(status: int, message: str) -> SkyshardError:
    exc = STATUS_EXCEPTIONS.get(status, SkyshardError)
    return exc(message)
