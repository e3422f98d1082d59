"""Client-side global layer: partitions writes, plans and scatters
sub-queries, and gathers/merges partial results.

The driver owns the catalog - the persisted map from datasets to their
objects, row ranges, node placements, and per-object zone maps (cached at
write time so the planner can eliminate objects without a network round
trip). Planning consults node-local equality indexes for top-level equality
conjuncts and prunes objects whose zone maps disprove the predicate; both
optimizations are result-invariant by construction and can be switched off.
"""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .aggregates import (
    CountState,
    MaxState,
    MinState,
    PartialAggState,
    SumCountState,
    ValuesState,
    decode_state,
    finalize,
    merge_states,
)
from .client import NodeInfo, NodePool
from .errors import (
    DatasetExists,
    EmptyInput,
    IndexMissing,
    NodeUnreachable,
    SchemaMismatch,
    SkyshardError,
    SubQueryFailed,
    UnknownDataset,
    STATUS_INTERNAL,
)
from .model import (
    ColumnType,
    ObjectName,
    Schema,
    Table,
    decode_object,
    encode_object,
    seal_table,
)
from .partition import (
    ChunkBox,
    PartitionEntry,
    PartitionMap,
    PartitionPolicy,
    place_objects,
    partition_table,
)
from .predicate import TruePred, can_prune, equality_conjuncts
from .query import ALL, AggSpec, Query, SubQuery, parse_query, render_subquery, subquery_for, validate_query
from .server import WireServer

CATALOG_VERSION = 1
DEFAULT_FANOUT = 16


@dataclass(frozen=True)
class CatalogObject:
    name: ObjectName
    node_id: str
    row_range: tuple[int, int] | None = None
    chunk: ChunkBox | None = None
    zone_map: dict[str, tuple] = field(default_factory=dict)


@dataclass(frozen=True)
class TableRecord:
    schema: Schema
    total_rows: int
    objects: tuple[CatalogObject, ...]


@dataclass(frozen=True)
class ArrayRecord:
    dtype: ColumnType
    shape: tuple[int, ...]
    chunk_shape: tuple[int, ...]
    objects: tuple[CatalogObject, ...]


class Catalog:
    """Versioned dataset -> objects map, persisted as one JSON file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._tables: dict[str, TableRecord] = {}
        self._arrays: dict[str, ArrayRecord] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        doc = json.loads(self.path.read_text("utf-8"))
        if doc.get("version") != CATALOG_VERSION:
            raise SkyshardError(f"catalog version {doc.get('version')} unsupported")
        for name, rec in doc.get("datasets", {}).items():
            objects = []
            for i, e in enumerate(rec["entries"]):
                zones = {
                    col: tuple(bounds) for col, bounds in e.get("zones", {}).items()
                }
                chunk = None
                if "coords" in e:
                    chunk = ChunkBox(
                        tuple(e["coords"]), tuple(e["offset"]), tuple(e["extents"])
                    )
                objects.append(
                    CatalogObject(
                        name=ObjectName(name, i),
                        node_id=e["node"],
                        row_range=tuple(e["rows"]) if "rows" in e else None,
                        chunk=chunk,
                        zone_map=zones,
                    )
                )
            if rec["kind"] == "table":
                self._tables[name] = TableRecord(
                    schema=Schema.from_text(rec["schema"]),
                    total_rows=rec["total_rows"],
                    objects=tuple(objects),
                )
            else:
                self._arrays[name] = ArrayRecord(
                    dtype=ColumnType(rec["dtype"]),
                    shape=tuple(rec["shape"]),
                    chunk_shape=tuple(rec["chunk_shape"]),
                    objects=tuple(objects),
                )

    def _save(self) -> None:
        datasets = {}
        for name, rec in self._tables.items():
            datasets[name] = {
                "kind": "table",
                "schema": rec.schema.to_text(),
                "total_rows": rec.total_rows,
                "entries": [
                    {
                        "node": o.node_id,
                        "rows": list(o.row_range),
                        "zones": {c: list(b) for c, b in o.zone_map.items()},
                    }
                    for o in rec.objects
                ],
            }
        for name, rec in self._arrays.items():
            datasets[name] = {
                "kind": "array",
                "dtype": rec.dtype.value,
                "shape": list(rec.shape),
                "chunk_shape": list(rec.chunk_shape),
                "entries": [
                    {
                        "node": o.node_id,
                        "coords": list(o.chunk.coords),
                        "offset": list(o.chunk.offset),
                        "extents": list(o.chunk.extents),
                    }
                    for o in rec.objects
                ],
            }
        doc = {"version": CATALOG_VERSION, "datasets": datasets}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True), "utf-8")
        os.replace(tmp, self.path)

    def has(self, dataset: str) -> bool:
        with self._lock:
            return dataset in self._tables or dataset in self._arrays

    def table(self, dataset: str) -> TableRecord:
        with self._lock:
            rec = self._tables.get(dataset)
            if rec is None:
                raise UnknownDataset(f"dataset {dataset!r} not in catalog")
            return rec

    def array(self, dataset: str) -> ArrayRecord:
        with self._lock:
            rec = self._arrays.get(dataset)
            if rec is None:
                raise UnknownDataset(f"array dataset {dataset!r} not in catalog")
            return rec

    def put_table(self, dataset: str, record: TableRecord) -> None:
        with self._lock:
            self._arrays.pop(dataset, None)
            self._tables[dataset] = record
            self._save()

    def put_array(self, dataset: str, record: ArrayRecord) -> None:
        with self._lock:
            self._tables.pop(dataset, None)
            self._arrays[dataset] = record
            self._save()

    def datasets(self) -> list[str]:
        with self._lock:
            return sorted(set(self._tables) | set(self._arrays))


@dataclass(frozen=True)
class PlanEntry:
    node_id: str
    name: ObjectName
    subquery: SubQuery
    agg_key: str | None = None  # distinguishes the min/max pre-pass entries

    @property
    def partition_index(self) -> int:
        return self.name.partition_index


class Driver:
    """Scatter/gather query engine over a set of storage nodes."""

    def __init__(
        self,
        nodes: list[NodeInfo],
        catalog_path: str | Path,
        fanout: int = DEFAULT_FANOUT,
        optimize: bool = True,
    ):
        self.pool = NodePool(nodes)
        self.catalog = Catalog(catalog_path)
        self.fanout = max(1, fanout)
        self.optimize = optimize
        self.rounds_dispatched = 0  # dispatch() calls; observable for tests

    def close(self) -> None:
        self.pool.close()

    # --- writes ---------------------------------------------------------

    def write_table(
        self,
        dataset: str,
        table: Table,
        policy: PartitionPolicy | None = None,
        overwrite: bool = False,
    ) -> PartitionMap:
        """Shard, seal, place, and push a table; all-or-error with one retry."""
        if self.catalog.has(dataset) and not overwrite:
            raise DatasetExists(f"dataset {dataset!r} already exists")
        policy = policy or PartitionPolicy()
        shards = partition_table(table, policy)
        names = [ObjectName(dataset, i) for i in range(len(shards))]
        ranges = []
        start = 0
        for shard in shards:
            ranges.append((start, start + len(shard)))
            start += len(shard)
        pmap = place_objects(names, self.pool.node_ids(), row_ranges=ranges)

        sealed = [seal_table(shard) for shard in shards]

        def push(i: int) -> None:
            payload = wire.build_put(names[i].render(), encode_object(sealed[i]))
            self._call_with_retry(pmap.entries[i].node_id, wire.MSG_PUT_OBJECT, payload)

        self._run_all(push, range(len(shards)))

        objects = tuple(
            CatalogObject(
                name=names[i],
                node_id=pmap.entries[i].node_id,
                row_range=ranges[i],
                zone_map=sealed[i].zone_map,
            )
            for i in range(len(shards))
        )
        self.catalog.put_table(
            dataset, TableRecord(schema=table.schema, total_rows=len(table), objects=objects)
        )
        return PartitionMap(
            dataset=dataset if names else dataset,
            entries=tuple(
                PartitionEntry(name=names[i], node_id=pmap.entries[i].node_id, row_range=ranges[i])
                for i in range(len(shards))
            ),
        )

    def _run_all(self, fn, keys) -> None:
        """Run fn over keys with bounded fan-out; first failure aborts the batch."""
        errors: list[Exception] = []
        done = 0
        with ThreadPoolExecutor(max_workers=self.fanout) as pool:
            futures = {pool.submit(fn, k): k for k in keys}
            for fut in futures:
                try:
                    fut.result()
                    done += 1
                except Exception as e:
                    errors.append(e)
        if errors:
            e = errors[0]
            if isinstance(e, NodeUnreachable):
                raise NodeUnreachable(
                    e.node_id,
                    f"{e.cause}; {done} of {len(futures)} objects written before failure",
                ) from e
            raise e

    def _call_with_retry(self, node_id: str, msg_type: int, payload: bytes) -> bytes:
        """Retry once against the same node on transient failures.

        Transport errors and internal-status responses are retried;
        authoritative answers (NotFound, type errors, ...) are not - the
        node decided, a retry cannot change it.
        """
        try:
            return self.pool.call(node_id, msg_type, payload)
        except NodeUnreachable:
            return self.pool.call(node_id, msg_type, payload)
        except SkyshardError as e:
            if e.wire_status == STATUS_INTERNAL:
                return self.pool.call(node_id, msg_type, payload)
            raise

    # --- planning -------------------------------------------------------

    def plan(self, q: Query) -> list[PlanEntry]:
        """One sub-query per surviving catalog object.

        median_approx resolves its histogram range first (a min/max pass
        over the same predicate) unless the query pinned one with RANGE.
        """
        rec = self.catalog.table(q.dataset)
        q = validate_query(q, rec.schema)
        if q.aggregate is not None and q.aggregate.fn == "median_approx":
            if q.histogram_range is not None:
                lo, hi = q.histogram_range
            else:
                lo, hi = self._run_min_max(q, rec)
            params = (float(lo), float(hi), q.aggregate.bins)
            return self._plan_single(q, rec, histogram_params=params)
        return self._plan_single(q, rec)

    def _plan_single(self, q: Query, rec: TableRecord, histogram_params=None) -> list[PlanEntry]:
        survivors = list(rec.objects)
        if self.optimize and not isinstance(q.predicate, TruePred):
            survivors = [
                o for o in survivors if not can_prune(q.predicate, o.zone_map)
            ]
            survivors = self._consult_indexes(q, rec, survivors)
        sq = subquery_for(q, histogram_params)
        return [PlanEntry(o.node_id, o.name, sq) for o in survivors]

    def _consult_indexes(
        self, q: Query, rec: TableRecord, survivors: list[CatalogObject]
    ) -> list[CatalogObject]:
        """Drop objects an equality index proves empty for some conjunct."""
        conjuncts = [
            c
            for c in equality_conjuncts(q.predicate)
            if rec.schema.column_type(c.column) is not ColumnType.FLOAT64
        ]
        if not conjuncts:
            return survivors
        for conj in conjuncts:
            by_node: dict[str, list[CatalogObject]] = {}
            for o in survivors:
                by_node.setdefault(o.node_id, []).append(o)
            keep: list[CatalogObject] = []
            for node_id, objs in by_node.items():
                payload = wire.build_lookup_index(q.dataset, conj.column, conj.literal)
                try:
                    body = self.pool.call(node_id, wire.MSG_LOOKUP_INDEX, payload)
                except IndexMissing:
                    keep.extend(objs)
                    continue
                except NodeUnreachable:
                    keep.extend(objs)  # planning stays best-effort; exec will retry
                    continue
                present = {p for p, _ in wire.parse_lookup_result(body)}
                keep.extend(o for o in objs if o.name.partition_index in present)
            survivors = sorted(keep, key=lambda o: o.name.partition_index)
        return survivors

    # --- dispatch and merge ----------------------------------------------

    def dispatch(self, entries: list[PlanEntry]) -> list[tuple[PlanEntry, bytes]]:
        """Issue sub-queries concurrently; one retry each, then fail the query."""
        self.rounds_dispatched += 1
        results: list[tuple[PlanEntry, bytes]] = []
        lock = threading.Lock()

        def run(entry: PlanEntry) -> None:
            payload = wire.build_exec(
                entry.name.render(), render_subquery(entry.name.dataset, entry.subquery)
            )
            try:
                body = self._call_with_retry(entry.node_id, wire.MSG_EXEC, payload)
            except (NodeUnreachable, SkyshardError) as e:
                raise SubQueryFailed(entry.name.render(), str(e)) from e
            with lock:
                results.append((entry, body))

        errors: list[Exception] = []
        with ThreadPoolExecutor(max_workers=self.fanout) as pool:
            futures = [pool.submit(run, e) for e in entries]
            for fut in futures:
                try:
                    fut.result()
                except Exception as e:
                    errors.append(e)
        if errors:
            raise errors[0]
        return results

    def _exec_round(self, entries: list[PlanEntry]):
        """Dispatch and decode: returns [(entry, ordinals, Table | state)]."""
        out = []
        for entry, body in self.dispatch(entries):
            tag, ordinals, rest = wire.parse_exec_result(body)
            if tag == wire.RESULT_TABLE:
                out.append((entry, ordinals, decode_object(rest).to_table()))
            else:
                out.append((entry, ordinals, decode_state(rest)))
        return out

    def _run_min_max(self, q: Query, rec: TableRecord) -> tuple[float, float]:
        """One combined round computing min and max over the same predicate."""
        specs = {fn: AggSpec(fn, q.aggregate.column) for fn in ("min", "max")}
        entries: list[PlanEntry] = []
        for fn, spec in specs.items():
            helper = Query(q.dataset, ALL, q.predicate, spec)
            for e in self._plan_single(helper, rec):
                entries.append(PlanEntry(e.node_id, e.name, e.subquery, agg_key=fn))
        parts: dict[str, list[PartialAggState]] = {"min": [], "max": []}
        for entry, _, state in self._exec_round(entries):
            parts[entry.agg_key].append(state)
        lo = finalize(specs["min"], self._fold_states(specs["min"], parts["min"], rec.schema))
        hi = finalize(specs["max"], self._fold_states(specs["max"], parts["max"], rec.schema))
        return lo, hi

    def _fold_states(self, spec: AggSpec, parts: list[PartialAggState], schema: Schema):
        if parts:
            state = parts[0]
            for p in parts[1:]:
                state = merge_states(state, p)
            return state
        is_float = (
            spec.fn != "count"
            and schema.column_type(spec.column) is ColumnType.FLOAT64
        )
        if spec.fn == "count":
            return CountState(0)
        if spec.fn in ("sum", "avg"):
            return SumCountState(0, 0, is_float)
        if spec.fn == "min":
            return MinState(None, is_float)
        if spec.fn == "max":
            return MaxState(None, is_float)
        if spec.fn == "median":
            return ValuesState((), is_float)
        raise EmptyInput("median over zero rows")  # median_approx, nothing planned

    def merge_select(self, parts, schema: Schema) -> Table:
        """Concatenate in (partition_index, ordinal) order."""
        for _, _, table in parts:
            if table.schema != schema:
                raise SchemaMismatch(
                    f"part schema {table.schema.to_text()} != {schema.to_text()}"
                )
        ordered = sorted(parts, key=lambda p: (p[0].partition_index, p[1][0] if p[1] else 0))
        return Table.concat([t for _, _, t in ordered], schema=schema)

    def execute(self, q: Query):
        """Plan -> dispatch -> merge; a Table for selects, a scalar for aggregates."""
        rec = self.catalog.table(q.dataset)
        q = validate_query(q, rec.schema)
        entries = self.plan(q)
        parts = self._exec_round(entries)
        if q.aggregate is None:
            names = rec.schema.names if q.projection == ALL else q.projection
            out_schema = rec.schema.project(list(names))
            return self.merge_select(parts, out_schema)
        spec = q.aggregate
        states = [r for _, _, r in parts]
        state = self._fold_states(spec, states, rec.schema)
        return finalize(spec, state)

    def execute_text(self, text: str):
        return self.execute(parse_query(text))

    # --- raw passthrough --------------------------------------------------

    def get_object(self, name: ObjectName, node_id: str | None = None) -> bytes:
        if node_id is None:
            rec = self.catalog.table(name.dataset)
            node_id = rec.objects[name.partition_index].node_id
        return self.pool.call(node_id, wire.MSG_GET_OBJECT, wire.build_get(name.render()))

    def build_index(self, dataset: str, column: str) -> int:
        """Index every object of a dataset on its node; sums per-object counts."""
        rec = self.catalog.table(dataset)
        rec.schema.column_type(column)
        total = 0
        lock = threading.Lock()

        def run(obj: CatalogObject) -> None:
            nonlocal total
            body = self._call_with_retry(
                obj.node_id,
                wire.MSG_BUILD_INDEX,
                wire.build_build_index(obj.name.render(), column),
            )
            count = wire.parse_build_index_result(body)
            with lock:
                total += count

        with ThreadPoolExecutor(max_workers=self.fanout) as pool:
            for fut in [pool.submit(run, o) for o in rec.objects]:
                fut.result()
        return total


class DriverServer(WireServer):
    """Wire service for remote clients: SUBMIT_QUERY, plus table ingest
    (PUT_OBJECT carrying a whole table as one sealed object, re-partitioned
    by the driver) and raw GET_OBJECT passthrough to the owning node."""

    def __init__(self, driver: Driver, host: str = "127.0.0.1", port: int = 0):
        self.driver = driver
        super().__init__(self._dispatch, host, port, name="driver")

    def _dispatch(self, frame: wire.Frame) -> tuple[int, bytes]:
        from .errors import STATUS_OK, STATUS_BAD_REQUEST, ParseError

        try:
            if frame.msg_type == wire.MSG_PING:
                return STATUS_OK, b""
            if frame.msg_type == wire.MSG_SUBMIT_QUERY:
                return self._submit_query(frame.payload)
            if frame.msg_type == wire.MSG_PUT_OBJECT:
                name_text, obj_bytes = wire.parse_put(frame.payload)
                name = ObjectName.parse(name_text)
                table = decode_object(obj_bytes).to_table()
                self.driver.write_table(name.dataset, table, overwrite=True)
                return STATUS_OK, b""
            if frame.msg_type == wire.MSG_GET_OBJECT:
                name = ObjectName.parse(wire.parse_get(frame.payload))
                return STATUS_OK, self.driver.get_object(name)
            return STATUS_BAD_REQUEST, b"driver service: PING, SUBMIT_QUERY, PUT_OBJECT, GET_OBJECT"
        except ParseError as e:
            return STATUS_BAD_REQUEST, e.caret_message().encode("utf-8")
        except ValueError as e:
            return STATUS_BAD_REQUEST, str(e).encode("utf-8")
        except SkyshardError as e:
            return e.wire_status, str(e).encode("utf-8")

    def _submit_query(self, payload: bytes) -> tuple[int, bytes]:
        from .errors import STATUS_OK

        text = wire.parse_submit_query(payload)
        result = self.driver.execute_text(text)
        if isinstance(result, Table):
            body = bytes([wire.RESULT_TABLE]) + encode_object(seal_table(result))
            return STATUS_OK, body
        return STATUS_OK, wire.build_scalar_result(result)
