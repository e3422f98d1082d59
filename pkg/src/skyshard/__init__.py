"""skyshard: a miniature distributed object store that pushes select,
project, filter, aggregate, and compress down to storage nodes and
scatter/gathers sub-queries from a client-side driver."""

from .aggregates import (
    CountState,
    HistogramState,
    MaxState,
    MinState,
    SumCountState,
    ValuesState,
    build_state,
    finalize,
    merge_states,
)
from .array import ArrayFacade, Hyperslab
from .client import Connection, NodeInfo, NodePool
from .config import ClusterConfig, load_config
from .driver import Catalog, Driver, DriverServer
from .model import (
    ColumnType,
    ObjectKind,
    ObjectName,
    Schema,
    SealedObject,
    Table,
    compute_zone_map,
    decode_object,
    encode_object,
    seal_table,
)
from .node import NodeCore, NodeServer
from .partition import (
    ArraySpec,
    PartitionMap,
    PartitionPolicy,
    chunk_grid,
    partition_table,
    place_objects,
)
from .predicate import And, Compare, Not, Or, TruePred, TRUE
from .query import AggSpec, Query, SubQuery, parse_query

__version__ = "0.1.0"

__all__ = [
    "AggSpec",
    "And",
    "ArrayFacade",
    "ArraySpec",
    "Catalog",
    "ClusterConfig",
    "ColumnType",
    "Compare",
    "Connection",
    "CountState",
    "Driver",
    "DriverServer",
    "HistogramState",
    "Hyperslab",
    "MaxState",
    "MinState",
    "NodeCore",
    "NodeInfo",
    "NodePool",
    "NodeServer",
    "Not",
    "ObjectKind",
    "ObjectName",
    "Or",
    "PartitionMap",
    "PartitionPolicy",
    "Query",
    "Schema",
    "SealedObject",
    "SubQuery",
    "SumCountState",
    "Table",
    "TruePred",
    "TRUE",
    "ValuesState",
    "build_state",
    "chunk_grid",
    "compute_zone_map",
    "decode_object",
    "encode_object",
    "finalize",
    "load_config",
    "merge_states",
    "parse_query",
    "partition_table",
    "place_objects",
    "seal_table",
]
