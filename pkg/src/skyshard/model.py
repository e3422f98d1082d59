"""Schemas, in-memory tables, object naming, and the sealed-object codec.

A sealed object is the self-describing unit stored on a node. Byte layout
(everything little-endian):

    magic "SKY1"            4 bytes
    kind                    u8   (0 = table shard, 1 = array chunk)
    version                 u32
    schema_text_len         u32
    schema_text             UTF-8, "name:i64" entries comma-joined
    row_count               u64
    compressed              u8   (0 / 1)
    zone map block          per column: presence u8, then min + max
                            (8 bytes each) when present
    payload_len             u64
    payload                 row values in schema order; Int64 as i64,
                            Float64 as IEEE-754 binary64, Utf8 as
                            u32 byte length + UTF-8 bytes

Zone-map bounds use the column's own 8-byte encoding (i64 or f64). When the
compressed flag is set the payload is the deflate stream of the raw row
bytes; the header (including the zone map) always describes the logical rows.
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field
from math import isfinite

from .errors import (
    BadMagic,
    SchemaParse,
    Truncated,
    TypeMismatch,
    UnsupportedVersion,
)

MAGIC = b"SKY1"
FORMAT_VERSION = 1

# Object names render as "<dataset>.<index as 8 digits>"; fixed width keeps
# lexicographic order equal to partition order.
PARTITION_INDEX_DIGITS = 8
MAX_PARTITION_INDEX = 10**PARTITION_INDEX_DIGITS

INT64_MIN = -(1 << 63)
INT64_MAX = (1 << 63) - 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")


class ColumnType(enum.Enum):
    INT64 = "i64"
    FLOAT64 = "f64"
    UTF8 = "utf8"

    @property
    def is_numeric(self) -> bool:
        return self is not ColumnType.UTF8


class ObjectKind(enum.IntEnum):
    TABLE_SHARD = 0
    ARRAY_CHUNK = 1


_TYPE_BY_TAG = {t.value: t for t in ColumnType}


@dataclass(frozen=True)
class Schema:
    """Ordered, uniquely named columns. Order survives encode/decode.

    Column names may not contain ':', ',', or NUL - the header carries the
    schema as text and the local index uses NUL-delimited keys.
    """

    columns: tuple[tuple[str, ColumnType], ...]

    def __init__(self, columns) -> None:
        cols = tuple((str(n), t) for n, t in columns)
        if not cols:
            raise SchemaParse("schema needs at least one column")
        seen = set()
        for name, ctype in cols:
            if not name:
                raise SchemaParse("empty column name")
            if any(c in name for c in ":,\0"):
                raise SchemaParse(f"column name {name!r} contains a reserved character")
            if not isinstance(ctype, ColumnType):
                raise SchemaParse(f"column {name!r}: not a ColumnType: {ctype!r}")
            if name in seen:
                raise SchemaParse(f"duplicate column name {name!r}")
            seen.add(name)
        object.__setattr__(self, "columns", cols)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.columns)

    def column_type(self, name: str) -> ColumnType:
        for n, t in self.columns:
            if n == name:
                return t
        from .errors import UnknownColumn

        raise UnknownColumn(f"no column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(n == name for n, _ in self.columns)

    def index_of(self, name: str) -> int:
        for i, (n, _) in enumerate(self.columns):
            if n == name:
                return i
        from .errors import UnknownColumn

        raise UnknownColumn(f"no column {name!r}")

    def to_text(self) -> str:
        return ",".join(f"{n}:{t.value}" for n, t in self.columns)

    @classmethod
    def from_text(cls, text: str) -> "Schema":
        cols = []
        for entry in text.split(","):
            name, sep, tag = entry.rpartition(":")
            if not sep or tag not in _TYPE_BY_TAG:
                raise SchemaParse(f"bad schema entry {entry!r}")
            cols.append((name, _TYPE_BY_TAG[tag]))
        return cls(cols)

    def project(self, names: list[str] | tuple[str, ...]) -> "Schema":
        return Schema([(n, self.column_type(n)) for n in names])


def _check_cell(name: str, ctype: ColumnType, value):
    """Validate one cell, returning the canonical stored value."""
    if ctype is ColumnType.INT64:
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(f"column {name!r}: expected int, got {value!r}")
        if not INT64_MIN <= value <= INT64_MAX:
            raise TypeMismatch(f"column {name!r}: {value} outside 64-bit range")
        return value
    if ctype is ColumnType.FLOAT64:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(f"column {name!r}: expected float, got {value!r}")
        value = float(value)
        # NaN/inf rejected up front: keeps comparisons, zone maps, and exact
        # decomposable sums total.
        if not isfinite(value):
            raise TypeMismatch(f"column {name!r}: non-finite value {value!r}")
        return value
    if not isinstance(value, str):
        raise TypeMismatch(f"column {name!r}: expected str, got {value!r}")
    return value


@dataclass(frozen=True)
class Table:
    """An immutable schema + row tuples. Rows are validated on construction."""

    schema: Schema
    rows: tuple[tuple, ...]

    def __init__(self, schema: Schema, rows) -> None:
        cols = schema.columns
        width = len(cols)
        checked = []
        for row in rows:
            if len(row) != width:
                raise TypeMismatch(
                    f"row has {len(row)} values, schema has {width} columns"
                )
            checked.append(
                tuple(_check_cell(n, t, v) for (n, t), v in zip(cols, row))
            )
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "rows", tuple(checked))

    def __len__(self) -> int:
        return len(self.rows)

    def column_values(self, name: str) -> list:
        i = self.schema.index_of(name)
        return [row[i] for row in self.rows]

    def slice_rows(self, start: int, stop: int) -> "Table":
        out = object.__new__(Table)
        object.__setattr__(out, "schema", self.schema)
        object.__setattr__(out, "rows", self.rows[start:stop])
        return out

    @staticmethod
    def concat(parts: list["Table"], schema: Schema | None = None) -> "Table":
        if schema is None:
            schema = parts[0].schema
        rows: list[tuple] = []
        for p in parts:
            rows.extend(p.rows)
        out = object.__new__(Table)
        object.__setattr__(out, "schema", schema)
        object.__setattr__(out, "rows", tuple(rows))
        return out


@dataclass(frozen=True, order=True)
class ObjectName:
    """A storage object's identity: dataset + partition ordinal.

    Datasets may not contain '.', '/', '\\\\', or NUL: the rendered name is
    split on '.' and doubles as a file name under the node's data directory.
    """

    dataset: str
    partition_index: int

    def __post_init__(self) -> None:
        if not self.dataset or any(c in self.dataset for c in "./\\\0"):
            raise ValueError(f"bad dataset name {self.dataset!r}")
        if not 0 <= self.partition_index < MAX_PARTITION_INDEX:
            raise ValueError(f"partition index {self.partition_index} out of range")

    def render(self) -> str:
        return f"{self.dataset}.{self.partition_index:0{PARTITION_INDEX_DIGITS}d}"

    @classmethod
    def parse(cls, text: str) -> "ObjectName":
        dataset, sep, digits = text.rpartition(".")
        if not sep or len(digits) != PARTITION_INDEX_DIGITS or not digits.isdigit():
            raise ValueError(f"bad object name {text!r}")
        return cls(dataset, int(digits))


def compute_zone_map(table: Table) -> dict[str, tuple]:
    """Exact per-column (min, max) for numeric columns; absent when no rows."""
    zones: dict[str, tuple] = {}
    if not table.rows:
        return zones
    for i, (name, ctype) in enumerate(table.schema.columns):
        if not ctype.is_numeric:
            continue
        lo = hi = table.rows[0][i]
        for row in table.rows:
            v = row[i]
            if v < lo:
                lo = v
            elif v > hi:
                hi = v
        zones[name] = (lo, hi)
    return zones


def encode_rows(schema: Schema, rows) -> bytes:
    """Encode row tuples to the raw payload byte stream."""
    out = bytearray()
    types = [t for _, t in schema.columns]
    for row in rows:
        for ctype, v in zip(types, row):
            if ctype is ColumnType.INT64:
                out += _I64.pack(v)
            elif ctype is ColumnType.FLOAT64:
                out += _F64.pack(v)
            else:
                b = v.encode("utf-8")
                out += _U32.pack(len(b))
                out += b
    return bytes(out)


def decode_rows(schema: Schema, data: bytes, row_count: int) -> list[tuple]:
    """Inverse of encode_rows; validates the payload length exactly."""
    rows: list[tuple] = []
    types = [t for _, t in schema.columns]
    pos = 0
    n = len(data)
    for _ in range(row_count):
        row = []
        for ctype in types:
            if ctype is ColumnType.INT64:
                if pos + 8 > n:
                    raise Truncated("payload: row values")
                row.append(_I64.unpack_from(data, pos)[0])
                pos += 8
            elif ctype is ColumnType.FLOAT64:
                if pos + 8 > n:
                    raise Truncated("payload: row values")
                row.append(_F64.unpack_from(data, pos)[0])
                pos += 8
            else:
                if pos + 4 > n:
                    raise Truncated("payload: string length")
                ln = _U32.unpack_from(data, pos)[0]
                pos += 4
                if pos + ln > n:
                    raise Truncated("payload: string bytes")
                row.append(data[pos : pos + ln].decode("utf-8"))
                pos += ln
        rows.append(tuple(row))
    if pos != n:
        raise Truncated("payload: trailing bytes after last row")
    return rows


@dataclass(frozen=True)
class SealedObject:
    """Decoded form of a stored object; ``payload`` is carried verbatim."""

    kind: ObjectKind
    version: int
    schema: Schema
    row_count: int
    compressed: bool
    zone_map: dict[str, tuple] = field(compare=True)
    payload: bytes = b""

    def raw_payload(self) -> bytes:
        """The uncompressed row byte stream."""
        return zlib.decompress(self.payload) if self.compressed else self.payload

    def to_table(self) -> Table:
        rows = decode_rows(self.schema, self.raw_payload(), self.row_count)
        out = object.__new__(Table)
        object.__setattr__(out, "schema", self.schema)
        object.__setattr__(out, "rows", tuple(rows))
        return out


def seal_table(
    table: Table,
    kind: ObjectKind = ObjectKind.TABLE_SHARD,
    compressed: bool = False,
) -> SealedObject:
    """Wrap a table in object metadata (zone map, counts, format version)."""
    payload = encode_rows(table.schema, table.rows)
    if compressed:
        payload = zlib.compress(payload)
    return SealedObject(
        kind=kind,
        version=FORMAT_VERSION,
        schema=table.schema,
        row_count=len(table.rows),
        compressed=compressed,
        zone_map=compute_zone_map(table),
        payload=payload,
    )


def _pack_bound(ctype: ColumnType, v) -> bytes:
    return _I64.pack(v) if ctype is ColumnType.INT64 else _F64.pack(v)


def encode_object(obj: SealedObject) -> bytes:
    """Serialize to the bit-exact on-disk / wire layout."""
    schema_text = obj.schema.to_text().encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += bytes([int(obj.kind)])
    out += _U32.pack(obj.version)
    out += _U32.pack(len(schema_text))
    out += schema_text
    out += _U64.pack(obj.row_count)
    out += bytes([1 if obj.compressed else 0])
    for name, ctype in obj.schema.columns:
        bounds = obj.zone_map.get(name)
        if bounds is None or not ctype.is_numeric:
            out += b"\0"
        else:
            out += b"\1"
            out += _pack_bound(ctype, bounds[0])
            out += _pack_bound(ctype, bounds[1])
    out += _U64.pack(len(obj.payload))
    out += obj.payload
    return bytes(out)


def _need(data: bytes, pos: int, n: int, what: str) -> None:
    if pos + n > len(data):
        raise Truncated(what)


def decode_object_prefix(data: bytes, pos: int = 0) -> tuple[SealedObject, int]:
    """Decode one object starting at ``pos``; returns (object, next offset)."""
    _need(data, pos, 4, "magic")
    if data[pos : pos + 4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[pos:pos + 4]!r}")
    pos += 4
    _need(data, pos, 1, "kind")
    kind_byte = data[pos]
    pos += 1
    try:
        kind = ObjectKind(kind_byte)
    except ValueError:
        raise SchemaParse(f"unknown object kind {kind_byte}") from None
    _need(data, pos, 4, "version")
    version = _U32.unpack_from(data, pos)[0]
    pos += 4
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"version {version}")
    _need(data, pos, 4, "schema_text_len")
    text_len = _U32.unpack_from(data, pos)[0]
    pos += 4
    _need(data, pos, text_len, "schema_text")
    try:
        schema = Schema.from_text(data[pos : pos + text_len].decode("utf-8"))
    except UnicodeDecodeError:
        raise SchemaParse("schema_text: invalid UTF-8") from None
    pos += text_len
    _need(data, pos, 8, "row_count")
    row_count = _U64.unpack_from(data, pos)[0]
    pos += 8
    _need(data, pos, 1, "compressed")
    compressed = data[pos] != 0
    pos += 1
    zone_map: dict[str, tuple] = {}
    for name, ctype in schema.columns:
        _need(data, pos, 1, f"zone_map presence for {name!r}")
        present = data[pos]
        pos += 1
        if present:
            _need(data, pos, 16, f"zone_map bounds for {name!r}")
            if ctype is ColumnType.INT64:
                lo = _I64.unpack_from(data, pos)[0]
                hi = _I64.unpack_from(data, pos + 8)[0]
            else:
                lo = _F64.unpack_from(data, pos)[0]
                hi = _F64.unpack_from(data, pos + 8)[0]
            pos += 16
            zone_map[name] = (lo, hi)
    _need(data, pos, 8, "payload_len")
    payload_len = _U64.unpack_from(data, pos)[0]
    pos += 8
    _need(data, pos, payload_len, "payload")
    payload = bytes(data[pos : pos + payload_len])
    pos += payload_len
    obj = SealedObject(
        kind=kind,
        version=version,
        schema=schema,
        row_count=row_count,
        compressed=compressed,
        zone_map=zone_map,
        payload=payload,
    )
    return obj, pos


def decode_object(data: bytes) -> SealedObject:
    """Inverse of encode_object; rejects trailing bytes."""
    obj, pos = decode_object_prefix(data, 0)
    if pos != len(data):
        raise Truncated(f"{len(data) - pos} trailing bytes after payload")
    return obj
