"""CSV ingestion with schema inference.

A column is Int64 when every cell lexes as an integer, else Float64 when
every cell lexes as a decimal, else Utf8. "nan"/"inf" spellings do not lex
as decimals - tables hold finite numbers only.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

from .errors import ParseError
from .model import ColumnType, Schema, Table

_INT_RE = re.compile(r"[+-]?\d+$")
_FLOAT_RE = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def infer_column_type(cells: list[str]) -> ColumnType:
    if all(_INT_RE.match(c) for c in cells):
        return ColumnType.INT64
    if all(_FLOAT_RE.match(c) for c in cells):
        return ColumnType.FLOAT64
    return ColumnType.UTF8


def load_csv(path: str | Path) -> Table:
    """Read a headered CSV into a typed table."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty CSV: missing header row", 0) from None
        raw_rows = list(reader)
    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise ParseError(
                f"row {i + 2}: expected {len(header)} cells, got {len(row)}", 0
            )
    columns = []
    for c, name in enumerate(header):
        cells = [row[c] for row in raw_rows]
        columns.append((name, infer_column_type(cells)))
    schema = Schema(columns)
    converted = []
    for row in raw_rows:
        out = []
        for (name, ctype), cell in zip(columns, row):
            if ctype is ColumnType.INT64:
                out.append(int(cell))
            elif ctype is ColumnType.FLOAT64:
                out.append(float(cell))
            else:
                out.append(cell)
        converted.append(tuple(out))
    return Table(schema, converted)
