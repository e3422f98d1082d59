"""Node-local persistent equality index.

An embedded SQLite key/value table maps "dataset\\0column\\0value" keys to
postings: (partition_index, row ordinals) groups for every local object
that holds the value. Rebuilding an object's index first strips that
partition from all postings under the (dataset, column) prefix, so a
rebuild after an overwrite reflects the new contents only.

Float64 columns are refused - floating equality is a semantics trap; range
predicates use zone maps instead.
"""

from __future__ import annotations

import sqlite3
import struct
import threading
from pathlib import Path

from .errors import IndexMissing, UnsupportedIndexType
from .wire import build_lookup_result, parse_lookup_result

_I64 = struct.Struct("<q")

_ENTRY = b"\x00"  # key namespace: postings
_META = b"\x01"  # key namespace: "(dataset, column) has been indexed here"


def _value_bytes(value: int | str) -> bytes:
    if isinstance(value, bool):
        raise UnsupportedIndexType("bool is not an indexable value")
    if isinstance(value, int):
        return b"i" + _I64.pack(value)
    if isinstance(value, str):
        return b"s" + value.encode("utf-8")
    raise UnsupportedIndexType(f"cannot index {type(value).__name__} values")


def _prefix(dataset: str, column: str) -> bytes:
    return _ENTRY + dataset.encode() + b"\0" + column.encode() + b"\0"


class LocalIndex:
    """Thread-safe wrapper around the index database file."""

    def __init__(self, data_dir: str | Path):
        path = Path(data_dir) / "index"
        path.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(path / "index.db", check_same_thread=False)
        self._conn.execute(
            "CREATE TABLE IF NOT EXISTS kv (k BLOB PRIMARY KEY, v BLOB NOT NULL)"
        )
        self._conn.commit()
        self._lock = threading.Lock()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def rebuild_object(
        self,
        dataset: str,
        column: str,
        partition_index: int,
        value_ordinals: dict[int | str, list[int]],
    ) -> int:
        """Replace one object's contribution; returns its distinct-value count."""
        prefix = _prefix(dataset, column)
        hi = prefix + b"\xff" * 8
        with self._lock, self._conn:
            rows = self._conn.execute(
                "SELECT k, v FROM kv WHERE k >= ? AND k < ?", (prefix, hi)
            ).fetchall()
            for k, v in rows:
                groups = [g for g in parse_lookup_result(v) if g[0] != partition_index]
                if groups:
                    self._conn.execute(
                        "UPDATE kv SET v = ? WHERE k = ?", (build_lookup_result(groups), k)
                    )
                else:
                    self._conn.execute("DELETE FROM kv WHERE k = ?", (k,))
            for value, ordinals in value_ordinals.items():
                key = prefix + _value_bytes(value)
                row = self._conn.execute("SELECT v FROM kv WHERE k = ?", (key,)).fetchone()
                groups = parse_lookup_result(row[0]) if row else []
                groups.append((partition_index, sorted(ordinals)))
                groups.sort(key=lambda g: g[0])
                self._conn.execute(
                    "INSERT INTO kv (k, v) VALUES (?, ?) "
                    "ON CONFLICT(k) DO UPDATE SET v = excluded.v",
                    (key, build_lookup_result(groups)),
                )
            meta = _META + dataset.encode() + b"\0" + column.encode()
            self._conn.execute(
                "INSERT OR REPLACE INTO kv (k, v) VALUES (?, ?)", (meta, b"1")
            )
        return len(value_ordinals)

    def is_indexed(self, dataset: str, column: str) -> bool:
        meta = _META + dataset.encode() + b"\0" + column.encode()
        with self._lock:
            return (
                self._conn.execute("SELECT 1 FROM kv WHERE k = ?", (meta,)).fetchone()
                is not None
            )

    def lookup(
        self, dataset: str, column: str, value: int | str
    ) -> list[tuple[int, list[int]]]:
        """Exact-equality postings among this node's objects."""
        if not self.is_indexed(dataset, column):
            raise IndexMissing(f"no index for {dataset}.{column} on this node")
        key = _prefix(dataset, column) + _value_bytes(value)
        with self._lock:
            row = self._conn.execute("SELECT v FROM kv WHERE k = ?", (key,)).fetchone()
        return parse_lookup_result(row[0]) if row else []
