"""Dataset splitting and deterministic object-to-node placement.

Tables are split into fixed-size row shards; arrays into a row-major chunk
grid. Objects land on nodes by rendezvous (highest-random-weight) hashing,
so membership changes only move the objects that lived on the lost node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import EmptyNodeSet
from .model import ColumnType, ObjectName, Table

DEFAULT_TARGET_ROWS = 4096

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a; stable across processes and languages."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def mix64(z: int) -> int:
    """splitmix64 finalizer: full avalanche over all 64 bits."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def rendezvous_score(key: bytes) -> int:
    """Placement weight for one (object, node) pair.

    Bare FNV-1a diffuses a trailing changed byte through just one multiply,
    which visibly skews argmax selection when node ids differ only in their
    last character; the finalizer restores uniform tie behavior.
    """
    return mix64(fnv1a64(key))


@dataclass(frozen=True)
class PartitionPolicy:
    target_rows: int = DEFAULT_TARGET_ROWS
    max_rows: int = 0  # 0 → defaults to 2 * target_rows

    def __post_init__(self) -> None:
        if self.max_rows == 0:
            object.__setattr__(self, "max_rows", 2 * self.target_rows)
        if not 1 <= self.target_rows <= self.max_rows:
            raise ValueError(
                f"need 1 <= target_rows <= max_rows, got {self.target_rows}, {self.max_rows}"
            )


@dataclass(frozen=True)
class ChunkBox:
    """One chunk of an array grid: grid coordinates plus clipped extents."""

    coords: tuple[int, ...]
    offset: tuple[int, ...]
    extents: tuple[int, ...]

    @property
    def cells(self) -> int:
        return math.prod(self.extents)


@dataclass(frozen=True)
class PartitionEntry:
    name: ObjectName
    node_id: str
    row_range: tuple[int, int] | None = None
    chunk: ChunkBox | None = None


@dataclass(frozen=True)
class PartitionMap:
    """The driver's routing table for one dataset."""

    dataset: str
    entries: tuple[PartitionEntry, ...] = field(default=())

    def __post_init__(self) -> None:
        for i, e in enumerate(self.entries):
            if e.name.partition_index != i or e.name.dataset != self.dataset:
                raise ValueError(f"entry {i} out of order: {e.name.render()}")
        ranges = [e.row_range for e in self.entries if e.row_range is not None]
        if ranges:
            expect = 0
            for start, stop in ranges:
                if start != expect or stop < start:
                    raise ValueError(f"row ranges not contiguous at {start}")
                expect = stop

    @property
    def total_rows(self) -> int:
        return max((e.row_range[1] for e in self.entries if e.row_range), default=0)


@dataclass(frozen=True)
class ArraySpec:
    """Shape, dtype, and chunking of an n-dimensional array dataset."""

    dtype: ColumnType
    shape: tuple[int, ...]
    chunk_shape: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "chunk_shape", tuple(self.chunk_shape))
        if self.dtype is ColumnType.UTF8:
            raise ValueError("array dtype must be Int64 or Float64")
        if len(self.shape) < 1 or len(self.shape) != len(self.chunk_shape):
            raise ValueError("shape and chunk_shape must have the same rank >= 1")
        for d, (ext, ch) in enumerate(zip(self.shape, self.chunk_shape)):
            if ext < 1 or ch < 1 or ch > ext:
                raise ValueError(f"dimension {d}: need 1 <= chunk <= extent")

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(
            -(-ext // ch) for ext, ch in zip(self.shape, self.chunk_shape)
        )


def partition_table(table: Table, policy: PartitionPolicy) -> list[Table]:
    """Split into shards of target_rows rows each (last one may be short)."""
    n = len(table)
    t = policy.target_rows
    return [table.slice_rows(i * t, min((i + 1) * t, n)) for i in range(-(-n // t))]


def chunk_grid(spec: ArraySpec) -> list[ChunkBox]:
    """Row-major chunk enumeration; the list index is the partition index."""
    boxes: list[ChunkBox] = []
    grid = spec.grid_shape
    coords = [0] * spec.rank
    total = math.prod(grid)
    for _ in range(total):
        offset = tuple(c * ch for c, ch in zip(coords, spec.chunk_shape))
        extents = tuple(
            min(ch, ext - off)
            for ch, ext, off in zip(spec.chunk_shape, spec.shape, offset)
        )
        boxes.append(ChunkBox(tuple(coords), offset, extents))
        for d in range(spec.rank - 1, -1, -1):
            coords[d] += 1
            if coords[d] < grid[d]:
                break
            coords[d] = 0
    return boxes


def choose_node(name: ObjectName, nodes: list[str]) -> str:
    """Rendezvous winner: argmax of h(name ++ ":" ++ node), smallest id on ties."""
    if not nodes:
        raise EmptyNodeSet("no nodes to place objects on")
    rendered = name.render()
    best = None
    best_score = -1
    for node_id in sorted(nodes):
        score = rendezvous_score(f"{rendered}:{node_id}".encode("utf-8"))
        if score > best_score:
            best, best_score = node_id, score
    return best


def place_objects(
    names: list[ObjectName],
    nodes: list[str],
    row_ranges: list[tuple[int, int]] | None = None,
    chunks: list[ChunkBox] | None = None,
) -> PartitionMap:
    """Assign every object a node; deterministic for identical inputs."""
    if not nodes:
        raise EmptyNodeSet("no nodes to place objects on")
    if len(set(nodes)) != len(nodes):
        raise ValueError("duplicate node ids")
    entries = []
    for i, name in enumerate(names):
        entries.append(
            PartitionEntry(
                name=name,
                node_id=choose_node(name, nodes),
                row_range=row_ranges[i] if row_ranges else None,
                chunk=chunks[i] if chunks else None,
            )
        )
    dataset = names[0].dataset if names else ""
    return PartitionMap(dataset=dataset, entries=tuple(entries))
