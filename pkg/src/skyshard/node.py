"""Storage node: object store + local index + pushdown extension functions.

NodeCore is the object-class layer - every remote operation (select,
project, filter, aggregate, compress, index build/lookup) runs here against
one locally stored object. NodeServer fronts a NodeCore with the wire
protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import wire
from .aggregates import PartialAggState, build_state, encode_state
from .errors import (
    SkyshardError,
    TypeMismatch,
    UnsupportedIndexType,
    STATUS_OK,
    STATUS_BAD_REQUEST,
)
from .model import (
    ColumnType,
    ObjectName,
    SealedObject,
    Table,
    decode_object,
    encode_object,
    seal_table,
)
from .predicate import Predicate, can_prune, compile_predicate, validate_predicate
from .query import ALL, SubQuery, parse_subquery
from .server import WireServer
from .store import ObjectStore
from .index import LocalIndex


@dataclass(frozen=True)
class ExecRows:
    """Filtered/projected rows plus their source ordinals (stored order)."""

    ordinals: tuple[int, ...]
    table: Table


class NodeCore:
    """All object-local operations, independent of any transport."""

    def __init__(self, node_id: str, data_dir: str | Path):
        if not node_id:
            raise ValueError("node_id must be non-empty")
        self.node_id = node_id
        self.store = ObjectStore(data_dir)
        self.index = LocalIndex(data_dir)
        # Test hook: called before each operation; may raise to inject faults.
        self.fault_hook: Callable[[str, str], None] | None = None

    def close(self) -> None:
        self.index.close()

    def _hook(self, op: str, name: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(op, name)

    def _load(self, name: ObjectName) -> SealedObject:
        return decode_object(self.store.get(name.render()))

    def put_object(self, name: ObjectName, data: bytes) -> None:
        """Validate-then-store; rejected bytes leave no trace."""
        self._hook("put", name.render())
        decode_object(data)
        self.store.put(name.render(), data)

    def get_object(self, name: ObjectName) -> bytes:
        self._hook("get", name.render())
        return self.store.get(name.render())

    def exec_extension(self, name: ObjectName, sq: SubQuery) -> ExecRows | PartialAggState:
        """Run one sub-query against one stored object, in stored row order."""
        self._hook("exec", name.render())
        obj = self._load(name)
        schema = obj.schema
        predicate = validate_predicate(sq.predicate, schema)
        match = compile_predicate(predicate, schema)
        table = obj.to_table()

        if sq.aggregate is not None:
            agg = sq.aggregate
            ctype = schema.column_type(agg.column)
            if agg.fn != "count" and not ctype.is_numeric:
                raise TypeMismatch(f"{agg.fn} needs a numeric column")
            col = schema.index_of(agg.column)
            values = [row[col] for row in table.rows if match(row)]
            return build_state(
                agg,
                values,
                histogram_params=sq.histogram_params,
                is_float=ctype is ColumnType.FLOAT64,
            )

        names = schema.names if sq.projection == ALL else tuple(sq.projection)
        out_schema = schema.project(list(names))
        cols = [schema.index_of(n) for n in names]
        ordinals = []
        rows = []
        for i, row in enumerate(table.rows):
            if match(row):
                ordinals.append(i)
                rows.append(tuple(row[c] for c in cols))
        result = object.__new__(Table)
        object.__setattr__(result, "schema", out_schema)
        object.__setattr__(result, "rows", tuple(rows))
        return ExecRows(tuple(ordinals), result)

    def prune_check(self, name: ObjectName, predicate: Predicate) -> bool:
        """True only when the zone map proves no stored row can match."""
        self._hook("prune", name.render())
        obj = self._load(name)
        predicate = validate_predicate(predicate, obj.schema)
        return can_prune(predicate, obj.zone_map)

    def build_index(self, name: ObjectName, column: str) -> int:
        self._hook("build_index", name.render())
        obj = self._load(name)
        ctype = obj.schema.column_type(column)
        if ctype is ColumnType.FLOAT64:
            raise UnsupportedIndexType("refusing equality index on a Float64 column")
        col = obj.schema.index_of(column)
        value_ordinals: dict[int | str, list[int]] = {}
        for i, row in enumerate(obj.to_table().rows):
            value_ordinals.setdefault(row[col], []).append(i)
        return self.index.rebuild_object(
            name.dataset, column, name.partition_index, value_ordinals
        )

    def lookup_index(
        self, dataset: str, column: str, value: int | str
    ) -> list[tuple[int, list[int]]]:
        self._hook("lookup_index", dataset)
        return self.index.lookup(dataset, column, value)

    def compress_object(self, name: ObjectName, mode: int) -> bool:
        """Toggle payload compression in place; False when already in mode."""
        self._hook("compress", name.render())
        obj = self._load(name)
        want = mode == wire.COMPRESS_MODE_COMPRESS
        if obj.compressed == want:
            return False
        recoded = seal_table(obj.to_table(), kind=obj.kind, compressed=want)
        self.store.put(name.render(), encode_object(recoded))
        return True


class NodeServer(WireServer):
    """Wire-protocol front end for a NodeCore."""

    def __init__(self, core: NodeCore, host: str = "127.0.0.1", port: int = 0,
                 max_workers: int = 32):
        self.core = core
        super().__init__(
            self._dispatch, host, port, max_workers, name=f"node-{core.node_id}"
        )

    def shutdown(self) -> None:
        super().shutdown()
        self.core.close()

    def _dispatch(self, frame: wire.Frame) -> tuple[int, bytes]:
        core = self.core
        try:
            t = frame.msg_type
            if t == wire.MSG_PING:
                return STATUS_OK, b""
            if t == wire.MSG_PUT_OBJECT:
                name_text, obj_bytes = wire.parse_put(frame.payload)
                core.put_object(ObjectName.parse(name_text), obj_bytes)
                return STATUS_OK, b""
            if t == wire.MSG_GET_OBJECT:
                name_text = wire.parse_get(frame.payload)
                return STATUS_OK, core.get_object(ObjectName.parse(name_text))
            if t == wire.MSG_EXEC:
                name_text, text = wire.parse_exec(frame.payload)
                _, sq = parse_subquery(text)
                result = core.exec_extension(ObjectName.parse(name_text), sq)
                if isinstance(result, ExecRows):
                    body = wire.build_exec_rows_result(
                        list(result.ordinals),
                        encode_object(seal_table(result.table)),
                    )
                else:
                    body = bytes([wire.RESULT_AGG_STATE]) + encode_state(result)
                return STATUS_OK, body
            if t == wire.MSG_BUILD_INDEX:
                name_text, column = wire.parse_build_index(frame.payload)
                count = core.build_index(ObjectName.parse(name_text), column)
                return STATUS_OK, wire.build_build_index_result(count)
            if t == wire.MSG_LOOKUP_INDEX:
                dataset, column, value = wire.parse_lookup_index(frame.payload)
                groups = core.lookup_index(dataset, column, value)
                return STATUS_OK, wire.build_lookup_result(groups)
            if t == wire.MSG_COMPRESS:
                name_text, mode = wire.parse_compress(frame.payload)
                changed = core.compress_object(ObjectName.parse(name_text), mode)
                return STATUS_OK, bytes([1 if changed else 0])
            return STATUS_BAD_REQUEST, f"unknown message type {t}".encode()
        except ValueError as e:
            return STATUS_BAD_REQUEST, str(e).encode("utf-8")
        except SkyshardError as e:
            return e.wire_status, str(e).encode("utf-8")


def run_node(node_id: str, host: str, port: int, data_dir: str | Path) -> NodeServer:
    """Construct a node with its listener bound (caller drives serve/shutdown)."""
    core = NodeCore(node_id, data_dir)
    try:
        return NodeServer(core, host, port)
    except Exception:
        core.close()
        raise
