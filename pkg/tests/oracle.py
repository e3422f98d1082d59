"""Single-pass brute-force query evaluation, independent of the engine.

Everything here is written against the plain row tuples: its own predicate
interpreter, its own aggregate folds (math.fsum for float sums), no partial
states, no merging. Query results from the distributed path must equal
these exactly (median_approx is exempt up to its bin-width bound).
"""

from __future__ import annotations

import math

from skyshard.model import ColumnType, Schema, Table
from skyshard.predicate import And, Compare, Not, Or, TruePred
from skyshard.query import ALL, Query


class OracleEmpty(Exception):
    """The aggregate is undefined over zero rows."""


def eval_predicate(pred, schema: Schema, row: tuple) -> bool:
    if isinstance(pred, TruePred):
        return True
    if isinstance(pred, Not):
        return not eval_predicate(pred.item, schema, row)
    if isinstance(pred, And):
        return all(eval_predicate(p, schema, row) for p in pred.items)
    if isinstance(pred, Or):
        return any(eval_predicate(p, schema, row) for p in pred.items)
    value = row[schema.index_of(pred.column)]
    lit = pred.literal
    if pred.op == "=":
        return value == lit
    if pred.op == "!=":
        return value != lit
    if pred.op == "<":
        return value < lit
    if pred.op == "<=":
        return value <= lit
    if pred.op == ">":
        return value > lit
    return value >= lit


def run_query(q: Query, table: Table):
    """Evaluate q over the whole table in one pass."""
    schema = table.schema
    kept = [row for row in table.rows if eval_predicate(q.predicate, schema, row)]
    if q.aggregate is None:
        names = schema.names if q.projection == ALL else q.projection
        idx = [schema.index_of(n) for n in names]
        return [tuple(row[i] for i in idx) for row in kept]
    fn = q.aggregate.fn
    if fn == "count":
        return len(kept)
    col = schema.index_of(q.aggregate.column)
    values = [row[col] for row in kept]
    is_float = schema.column_type(q.aggregate.column) is ColumnType.FLOAT64
    if fn == "sum":
        return math.fsum(values) if is_float else sum(values)
    if not values and fn in ("avg", "min", "max", "median", "median_approx"):
        raise OracleEmpty(fn)
    if fn == "avg":
        total = math.fsum(values) if is_float else sum(values)
        return total / len(values)
    if fn == "min":
        return min(values)
    if fn == "max":
        return max(values)
    if fn in ("median", "median_approx"):
        ordered = sorted(values)
        mid = len(ordered) // 2
        if len(ordered) % 2:
            return ordered[mid]
        return (ordered[mid - 1] + ordered[mid]) / 2
    raise ValueError(fn)
