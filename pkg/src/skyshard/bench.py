"""Benchmark harness: write scaling across node subsets, and pushdown
versus fetch-then-filter with honest byte accounting.

Reports carry every raw number a derived figure is computed from; speedups
are always time(base) / time(config) over values present in the report.
"""

from __future__ import annotations

import tempfile
import time

from .array import ArrayFacade, mirror_write, native_write
from .config import ClusterConfig
from .driver import Driver
from .model import Schema, Table, ColumnType
from .partition import PartitionPolicy
from .predicate import compile_predicate
from .query import parse_query
from . import wire
from .model import decode_object


def make_driver(config: ClusterConfig, optimize: bool = True) -> Driver:
    return Driver(
        config.node_infos(), config.catalog, fanout=config.fanout, optimize=optimize
    )


def run_write_scaling(
    driver: Driver,
    size_mb: int,
    node_counts: list[int],
    chunk_mb: int = 4,
    native_dir: str | None = None,
) -> dict:
    """Write size_mb through the forwarding path for each node-subset size,
    plus the direct local baseline."""
    if size_mb <= 0:
        raise ValueError("--size-mb must be positive")
    if chunk_mb <= 0:
        raise ValueError("--chunk-mb must be positive")
    node_ids = driver.pool.node_ids()
    for k in node_counts:
        if k < 1 or k > len(node_ids):
            raise ValueError(f"node count {k} not satisfiable with {len(node_ids)} nodes")
    total_bytes = size_mb * 1024 * 1024
    chunk_bytes = chunk_mb * 1024 * 1024
    subsets = [node_ids[:k] for k in node_counts]
    facade = ArrayFacade(driver)
    tag = int(time.time() * 1000) % 1_000_000
    runs = mirror_write(
        facade, total_bytes, subsets, chunk_bytes=chunk_bytes,
        dataset_prefix=f"writebench{tag}",
    )
    for r in runs:
        r["mode"] = "forwarding"

    if native_dir is None:
        with tempfile.TemporaryDirectory(prefix="skyshard-native-") as d:
            native = native_write(total_bytes, d, chunk_bytes=chunk_bytes)
    else:
        native = native_write(total_bytes, native_dir, chunk_bytes=chunk_bytes)
    native["mode"] = "native"
    native["nodes"] = 1

    by_nodes = {r["nodes"]: r["seconds"] for r in runs}
    base = node_counts[0]
    speedups = {
        f"forwarding_{base}_to_{k}": by_nodes[base] / by_nodes[k]
        for k in node_counts
        if k != base
    }
    speedups["forwarding_1_over_native"] = (
        by_nodes.get(1, by_nodes[base]) / native["seconds"]
    )
    return {
        "benchmark": "write-scaling",
        "size_mb": size_mb,
        "chunk_mb": chunk_mb,
        "runs": runs + [native],
        "speedups": speedups,
    }


def build_selectivity_table(rows: int, selectivity: float) -> Table:
    """Two i64 columns: flag is 1 on an even spread of ~rows*selectivity rows."""
    if rows < 1:
        raise ValueError("--rows must be positive")
    if not 0.0 <= selectivity <= 1.0:
        raise ValueError("--selectivity must be within [0, 1]")
    matches = round(rows * selectivity)
    flags = [0] * rows
    if matches:
        step = rows / matches
        for j in range(matches):
            flags[min(int(j * step), rows - 1)] = 1
    schema = Schema([("flag", ColumnType.INT64), ("v", ColumnType.INT64)])
    data = [(flags[i], (i * 2654435761) % (1 << 31)) for i in range(rows)]
    return Table(schema, data)


def run_pushdown(
    driver: Driver,
    rows: int,
    selectivity: float,
    target_rows: int = 4096,
    dataset: str = "pushbench",
) -> dict:
    """Same filter once pushed down, once as fetch-objects-then-filter."""
    table = build_selectivity_table(rows, selectivity)
    driver.write_table(
        dataset, table, PartitionPolicy(target_rows=target_rows), overwrite=True
    )
    query = parse_query(f"SELECT * FROM {dataset} WHERE flag = 1")

    sent0, recv0 = driver.pool.counters.snapshot()
    t0 = time.perf_counter()
    pushed = driver.execute(query)
    push_seconds = time.perf_counter() - t0
    sent1, recv1 = driver.pool.counters.snapshot()
    push_bytes = (sent1 - sent0) + (recv1 - recv0)

    rec = driver.catalog.table(dataset)
    match = compile_predicate(query.predicate, rec.schema)
    t0 = time.perf_counter()
    fetched_rows: list[tuple] = []
    for obj in rec.objects:
        raw = driver.pool.call(
            obj.node_id, wire.MSG_GET_OBJECT, wire.build_get(obj.name.render())
        )
        shard = decode_object(raw).to_table()
        fetched_rows.extend(r for r in shard.rows if match(r))
    fetch_seconds = time.perf_counter() - t0
    sent2, recv2 = driver.pool.counters.snapshot()
    fetch_bytes = (sent2 - sent1) + (recv2 - recv1)

    identical = list(pushed.rows) == fetched_rows
    return {
        "benchmark": "pushdown",
        "rows": rows,
        "selectivity": selectivity,
        "target_rows": target_rows,
        "matched_rows": len(pushed.rows),
        "runs": [
            {"mode": "pushdown", "seconds": push_seconds, "bytes": push_bytes},
            {"mode": "fetch-filter", "seconds": fetch_seconds, "bytes": fetch_bytes},
        ],
        "byte_ratio": push_bytes / fetch_bytes if fetch_bytes else 0.0,
        "results_identical": identical,
    }


def render_report(report: dict) -> str:
    """Human-readable lines; --json emits the dict instead."""
    lines = [f"benchmark: {report['benchmark']}"]
    for key in ("size_mb", "chunk_mb", "rows", "selectivity", "target_rows", "matched_rows"):
        if key in report:
            lines.append(f"{key}: {report[key]}")
    for run in report["runs"]:
        extra = f" nodes={run['nodes']}" if "nodes" in run else ""
        bytes_part = f" bytes={run['bytes']}" if "bytes" in run else ""
        lines.append(f"run: {run['mode']}{extra} seconds={run['seconds']:.3f}{bytes_part}")
    for name, value in report.get("speedups", {}).items():
        lines.append(f"speedup {name}: {value:.3f}x")
    if "byte_ratio" in report:
        lines.append(f"byte_ratio pushdown/fetch: {report['byte_ratio']:.5f}")
    if "results_identical" in report:
        lines.append(f"results_identical: {report['results_identical']}")
    return "\n".join(lines)
