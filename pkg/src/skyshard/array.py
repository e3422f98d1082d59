"""N-dimensional array datasets over chunk objects: hyperslab reads and
writes that scatter/gather sub-requests to storage nodes.

Chunks are materialized lazily; a chunk nobody wrote reads back as zeros.
Writes intersect the slab with the chunk grid: fully covered chunks are
overwritten without a read, partially covered chunks go through
read-modify-write. Writes to one chunk are serialized by the node's
per-object contract; cross-chunk atomicity is not guaranteed.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import wire
from .client import NodePool
from .driver import ArrayRecord, CatalogObject, Driver
from .errors import (
    DatasetExists,
    LengthMismatch,
    NotFound,
    OutOfBounds,
    TypeMismatch,
)
from .model import (
    ColumnType,
    FORMAT_VERSION,
    ObjectName,
    ObjectKind,
    Schema,
    SealedObject,
    decode_object,
    encode_object,
)
from .partition import ArraySpec, ChunkBox, choose_node, chunk_grid
from .store import ObjectStore

_NP_DTYPE = {ColumnType.INT64: "<i8", ColumnType.FLOAT64: "<f8"}
CHUNK_COLUMN = "value"


@dataclass(frozen=True)
class Hyperslab:
    """offset + shape rectangle; rank must match the dataset."""

    offset: tuple[int, ...]
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "offset", tuple(self.offset))
        object.__setattr__(self, "shape", tuple(self.shape))
        if len(self.offset) != len(self.shape):
            raise OutOfBounds("offset and shape rank differ")
        if any(o < 0 for o in self.offset) or any(s < 1 for s in self.shape):
            raise OutOfBounds("offset must be >= 0 and shape >= 1")

    @property
    def cells(self) -> int:
        return math.prod(self.shape)


def seal_chunk(cells: np.ndarray, dtype: ColumnType) -> SealedObject:
    """Wrap row-major chunk cells as a single-column sealed object."""
    flat = np.ascontiguousarray(cells, dtype=_NP_DTYPE[dtype]).reshape(-1)
    if dtype is ColumnType.FLOAT64 and not np.isfinite(flat).all():
        raise TypeMismatch("array cells must be finite")
    lo, hi = flat.min().item(), flat.max().item()
    return SealedObject(
        kind=ObjectKind.ARRAY_CHUNK,
        version=FORMAT_VERSION,
        schema=Schema([(CHUNK_COLUMN, dtype)]),
        row_count=flat.size,
        compressed=False,
        zone_map={CHUNK_COLUMN: (lo, hi)},
        payload=flat.tobytes(),
    )


def chunk_cells(obj: SealedObject, box: ChunkBox, dtype: ColumnType) -> np.ndarray:
    data = np.frombuffer(obj.raw_payload(), dtype=_NP_DTYPE[dtype])
    if data.size != box.cells:
        raise LengthMismatch(f"chunk holds {data.size} cells, grid says {box.cells}")
    return data.reshape(box.extents)


def _linearize(coords: tuple[int, ...], grid: tuple[int, ...]) -> int:
    idx = 0
    for c, g in zip(coords, grid):
        idx = idx * g + c
    return idx


def _intersecting(spec: ArraySpec, slab: Hyperslab):
    """Partition indexes of chunks whose boxes intersect the slab."""
    ranges = []
    for off, length, ch in zip(slab.offset, slab.shape, spec.chunk_shape):
        ranges.append(range(off // ch, (off + length - 1) // ch + 1))
    grid = spec.grid_shape
    for coords in itertools.product(*ranges):
        yield _linearize(coords, grid)


class ArrayFacade:
    """Array dataset operations over a driver's catalog, pool, and fan-out."""

    def __init__(self, driver: Driver):
        self.driver = driver
        self.catalog = driver.catalog
        self.pool: NodePool = driver.pool

    def create_array(
        self,
        name: str,
        spec: ArraySpec,
        placement: str = "rendezvous",
        nodes: list[str] | None = None,
    ) -> ArrayRecord:
        """Enumerate and place the chunk grid; no objects are written yet."""
        if self.catalog.has(name):
            raise DatasetExists(f"dataset {name!r} already exists")
        node_ids = nodes if nodes is not None else self.pool.node_ids()
        boxes = chunk_grid(spec)
        objects = []
        for i, box in enumerate(boxes):
            obj_name = ObjectName(name, i)
            if placement == "round-robin":
                node_id = node_ids[i % len(node_ids)]
            else:
                node_id = choose_node(obj_name, node_ids)
            objects.append(
                CatalogObject(name=obj_name, node_id=node_id, chunk=box)
            )
        record = ArrayRecord(
            dtype=spec.dtype,
            shape=spec.shape,
            chunk_shape=spec.chunk_shape,
            objects=tuple(objects),
        )
        self.catalog.put_array(name, record)
        return record

    def _spec(self, record: ArrayRecord) -> ArraySpec:
        return ArraySpec(record.dtype, record.shape, record.chunk_shape)

    def _check_slab(self, record: ArrayRecord, slab: Hyperslab) -> None:
        if len(slab.shape) != len(record.shape):
            raise OutOfBounds("slab rank does not match dataset rank")
        for off, length, ext in zip(slab.offset, slab.shape, record.shape):
            if off + length > ext:
                raise OutOfBounds(f"slab [{off}, {off + length}) exceeds extent {ext}")

    def write_hyperslab(self, name: str, slab: Hyperslab, data) -> int:
        """Overlay data on the slab; returns the number of chunks touched."""
        record = self.catalog.array(name)
        self._check_slab(record, slab)
        spec = self._spec(record)
        arr = np.asarray(data, dtype=_NP_DTYPE[record.dtype])
        if arr.size != slab.cells:
            raise LengthMismatch(f"data has {arr.size} cells, slab has {slab.cells}")
        if record.dtype is ColumnType.FLOAT64 and not np.isfinite(arr).all():
            raise TypeMismatch("array cells must be finite")
        arr = arr.reshape(slab.shape)
        touched = list(_intersecting(spec, slab))

        def write_one(pi: int) -> None:
            obj = record.objects[pi]
            box = obj.chunk
            sel_chunk, sel_slab, full = _overlap(box, slab)
            if full:
                cells = np.ascontiguousarray(arr[sel_slab])
            else:
                cells = self._fetch_cells(record, obj).copy()
                cells[sel_chunk] = arr[sel_slab]
            payload = wire.build_put(
                obj.name.render(), encode_object(seal_chunk(cells, record.dtype))
            )
            self.driver._call_with_retry(obj.node_id, wire.MSG_PUT_OBJECT, payload)

        self._fan_out(write_one, touched)
        return len(touched)

    def read_hyperslab(self, name: str, slab: Hyperslab) -> np.ndarray:
        """Gather intersecting chunks concurrently; zeros where unwritten."""
        record = self.catalog.array(name)
        self._check_slab(record, slab)
        spec = self._spec(record)
        out = np.zeros(slab.shape, dtype=_NP_DTYPE[record.dtype])
        touched = list(_intersecting(spec, slab))

        def read_one(pi: int) -> None:
            obj = record.objects[pi]
            sel_chunk, sel_slab, _ = _overlap(obj.chunk, slab)
            out[sel_slab] = self._fetch_cells(record, obj)[sel_chunk]

        self._fan_out(read_one, touched)
        return out

    def _fetch_cells(self, record: ArrayRecord, obj: CatalogObject) -> np.ndarray:
        try:
            raw = self.driver._call_with_retry(
                obj.node_id, wire.MSG_GET_OBJECT, wire.build_get(obj.name.render())
            )
        except NotFound:
            return np.zeros(obj.chunk.extents, dtype=_NP_DTYPE[record.dtype])
        return chunk_cells(decode_object(raw), obj.chunk, record.dtype)

    def _fan_out(self, fn, keys) -> None:
        if len(keys) == 1:
            fn(keys[0])
            return
        with ThreadPoolExecutor(max_workers=self.driver.fanout) as pool:
            for fut in [pool.submit(fn, k) for k in keys]:
                fut.result()


def _overlap(box: ChunkBox, slab: Hyperslab):
    """Slices selecting the intersection inside the chunk and inside the slab."""
    sel_chunk = []
    sel_slab = []
    full = True
    for c_off, c_ext, s_off, s_ext in zip(box.offset, box.extents, slab.offset, slab.shape):
        lo = max(c_off, s_off)
        hi = min(c_off + c_ext, s_off + s_ext)
        sel_chunk.append(slice(lo - c_off, hi - c_off))
        sel_slab.append(slice(lo - s_off, hi - s_off))
        if lo != c_off or hi != c_off + c_ext:
            full = False
    return tuple(sel_chunk), tuple(sel_slab), full


# --- write-scaling measurement ------------------------------------------------


def mirror_write(
    facade: ArrayFacade,
    total_bytes: int,
    node_subsets: list[list[str]],
    chunk_bytes: int = 4 * 1024 * 1024,
    dataset_prefix: str = "mirrorbench",
    seed: int = 7,
) -> list[dict]:
    """Time writing one dataset of total_bytes split evenly over each subset.

    Every configuration writes the same cells: chunk i of the 1-D dataset
    goes to subset node i % k, so each of the k nodes receives exactly
    total_bytes / k. Returns one {"nodes", "node_ids", "seconds"} per subset.
    """
    if total_bytes <= 0:
        raise ValueError("total_bytes must be positive")
    cells_per_chunk = max(1, chunk_bytes // 8)
    chunks = max(1, math.ceil(total_bytes / (cells_per_chunk * 8)))
    counts = sorted({len(s) for s in node_subsets})
    lcm = math.lcm(*counts) if counts else 1
    chunks = max(lcm, (chunks // lcm) * lcm)  # even split for every subset size
    cells = chunks * cells_per_chunk

    rng = np.random.default_rng(seed)
    data = rng.random(cells)
    spec = ArraySpec(ColumnType.FLOAT64, (cells,), (cells_per_chunk,))
    slab = Hyperslab((0,), (cells,))

    results = []
    for i, subset in enumerate(node_subsets):
        dataset = f"{dataset_prefix}_{i}_{len(subset)}"
        facade.create_array(dataset, spec, placement="round-robin", nodes=list(subset))
        start = time.perf_counter()
        facade.write_hyperslab(dataset, slab, data)
        elapsed = time.perf_counter() - start
        results.append(
            {"nodes": len(subset), "node_ids": list(subset), "seconds": elapsed,
             "bytes": cells * 8}
        )
    return results


def native_write(
    total_bytes: int,
    data_dir,
    chunk_bytes: int = 4 * 1024 * 1024,
    dataset: str = "nativebench",
    seed: int = 7,
) -> dict:
    """The no-forwarding baseline: encode the same chunks and write them
    straight to a local store (same fsync discipline, no network)."""
    cells_per_chunk = max(1, chunk_bytes // 8)
    chunks = max(1, math.ceil(total_bytes / (cells_per_chunk * 8)))
    cells = chunks * cells_per_chunk
    rng = np.random.default_rng(seed)
    data = rng.random(cells)
    store = ObjectStore(data_dir)
    start = time.perf_counter()
    for i in range(chunks):
        piece = data[i * cells_per_chunk : (i + 1) * cells_per_chunk]
        obj = seal_chunk(piece, ColumnType.FLOAT64)
        store.put(ObjectName(dataset, i).render(), encode_object(obj))
    elapsed = time.perf_counter() - start
    return {"seconds": elapsed, "bytes": cells * 8, "chunks": chunks}
