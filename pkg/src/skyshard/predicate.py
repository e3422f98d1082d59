"""Predicate expressions: validation, row evaluation, zone-map reasoning.

The same tree drives three things: per-row filtering on storage nodes,
plan-time object elimination, and text rendering for sub-query shipping.
Pruning is sound but not complete - it only claims an object can be skipped
when the zone map *proves* no row can match.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .errors import TypeMismatch, UnknownColumn
from .model import ColumnType, Schema

COMPARE_OPS = ("=", "!=", "<", "<=", ">", ">=")

# Utf8 columns support equality only; range comparisons stay numeric in v1.
_UTF8_OPS = ("=", "!=")


@dataclass(frozen=True)
class Compare:
    column: str
    op: str
    literal: Union[int, float, str]

    def __post_init__(self) -> None:
        if self.op not in COMPARE_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class TruePred:
    pass


TRUE = TruePred()

Predicate = Union[Compare, And, Or, Not, TruePred]


def validate_predicate(pred: Predicate, schema: Schema) -> Predicate:
    """Type-check against a schema; returns a copy with literals canonicalized
    (int literals widen to float against Float64 columns)."""
    if isinstance(pred, TruePred):
        return pred
    if isinstance(pred, Not):
        return Not(validate_predicate(pred.item, schema))
    if isinstance(pred, And):
        return And(tuple(validate_predicate(p, schema) for p in pred.items))
    if isinstance(pred, Or):
        return Or(tuple(validate_predicate(p, schema) for p in pred.items))
    ctype = schema.column_type(pred.column)  # raises UnknownColumn
    lit = pred.literal
    if ctype is ColumnType.UTF8:
        if not isinstance(lit, str):
            raise TypeMismatch(f"column {pred.column!r} is utf8, literal {lit!r} is not")
        if pred.op not in _UTF8_OPS:
            raise TypeMismatch(f"operator {pred.op!r} not allowed on utf8 column")
        return pred
    if isinstance(lit, str) or isinstance(lit, bool):
        raise TypeMismatch(f"column {pred.column!r} is numeric, literal {lit!r} is not")
    if ctype is ColumnType.INT64 and not isinstance(lit, int):
        raise TypeMismatch(f"column {pred.column!r} is i64, literal {lit!r} is not an integer")
    if ctype is ColumnType.FLOAT64 and isinstance(lit, int):
        return Compare(pred.column, pred.op, float(lit))
    return pred


_OP_FUNCS: dict[str, Callable] = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def compile_predicate(pred: Predicate, schema: Schema) -> Callable[[tuple], bool]:
    """Resolve column offsets once and return a fast row -> bool closure."""
    if isinstance(pred, TruePred):
        return lambda row: True
    if isinstance(pred, Compare):
        idx = schema.index_of(pred.column)
        fn = _OP_FUNCS[pred.op]
        lit = pred.literal
        return lambda row: fn(row[idx], lit)
    if isinstance(pred, Not):
        inner = compile_predicate(pred.item, schema)
        return lambda row: not inner(row)
    parts = [compile_predicate(p, schema) for p in pred.items]
    if isinstance(pred, And):
        return lambda row: all(p(row) for p in parts)
    return lambda row: any(p(row) for p in parts)


def render_predicate(pred: Predicate) -> str:
    """Grammar text for the predicate; inverse of the parser."""
    return _render(pred)


def _render_literal(lit) -> str:
    if isinstance(lit, str):
        return "'" + lit.replace("'", "''") + "'"
    return repr(lit)


def _render(pred: Predicate) -> str:
    if isinstance(pred, TruePred):
        return "TRUE"
    if isinstance(pred, Compare):
        return f"{pred.column} {pred.op} {_render_literal(pred.literal)}"
    if isinstance(pred, Not):
        return f"NOT ({_render(pred.item)})"
    joiner = " AND " if isinstance(pred, And) else " OR "
    return joiner.join(f"({_render(p)})" for p in pred.items)


# --- zone-map reasoning ----------------------------------------------------
#
# zone_map maps numeric column name -> (min, max) over the object's rows.
# can_prune(p): the zone map proves NO row satisfies p.
# proves_all(p): the zone map proves EVERY row satisfies p.
# The pair makes NOT sound: no row satisfies NOT e  <=>  every row satisfies e.


def can_prune(pred: Predicate, zone_map: dict[str, tuple]) -> bool:
    if isinstance(pred, TruePred):
        return False
    if isinstance(pred, Compare):
        bounds = zone_map.get(pred.column)
        if bounds is None or isinstance(pred.literal, str):
            return False  # utf8 or absent stats never prune
        lo, hi = bounds
        lit = pred.literal
        op = pred.op
        if op == "=":
            return lit < lo or lit > hi
        if op == "!=":
            return lo == hi == lit
        if op == "<":
            return lo >= lit
        if op == "<=":
            return lo > lit
        if op == ">":
            return hi <= lit
        return hi < lit  # >=
    if isinstance(pred, And):
        return any(can_prune(p, zone_map) for p in pred.items)
    if isinstance(pred, Or):
        return bool(pred.items) and all(can_prune(p, zone_map) for p in pred.items)
    return proves_all(pred.item, zone_map)  # Not


def proves_all(pred: Predicate, zone_map: dict[str, tuple]) -> bool:
    if isinstance(pred, TruePred):
        return True
    if isinstance(pred, Compare):
        bounds = zone_map.get(pred.column)
        if bounds is None or isinstance(pred.literal, str):
            return False
        lo, hi = bounds
        lit = pred.literal
        op = pred.op
        if op == "=":
            return lo == hi == lit
        if op == "!=":
            return lit < lo or lit > hi
        if op == "<":
            return hi < lit
        if op == "<=":
            return hi <= lit
        if op == ">":
            return lo > lit
        return lo >= lit  # >=
    if isinstance(pred, And):
        return all(proves_all(p, zone_map) for p in pred.items)
    if isinstance(pred, Or):
        return any(proves_all(p, zone_map) for p in pred.items)
    return can_prune(pred.item, zone_map)  # Not


def equality_conjuncts(pred: Predicate) -> list[Compare]:
    """Top-level equality comparisons usable for index consultation.

    A bare ``col = lit`` predicate or any ``col = lit`` conjunct of a
    top-level AND qualifies; anything under OR/NOT does not.
    """
    if isinstance(pred, Compare) and pred.op == "=":
        return [pred]
    if isinstance(pred, And):
        out = []
        for p in pred.items:
            if isinstance(p, Compare) and p.op == "=":
                out.append(p)
        return out
    return []
