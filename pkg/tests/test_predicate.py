"""Predicate validation, evaluation, and zone-map reasoning."""

import random

import pytest

from generators import MIXED_SCHEMA, random_predicate, random_table
from oracle import eval_predicate

from skyshard.errors import TypeMismatch, UnknownColumn
from skyshard.model import ColumnType, Schema, Table, compute_zone_map
from skyshard.predicate import (
    TRUE,
    And,
    Compare,
    Not,
    Or,
    can_prune,
    compile_predicate,
    equality_conjuncts,
    proves_all,
    validate_predicate,
)

SCHEMA = Schema(
    [("a", ColumnType.INT64), ("b", ColumnType.FLOAT64), ("s", ColumnType.UTF8)]
)


def test_validate_rejects_unknown_column():
    with pytest.raises(UnknownColumn):
        validate_predicate(Compare("zz", "=", 1), SCHEMA)


def test_validate_type_rules():
    with pytest.raises(TypeMismatch):
        validate_predicate(Compare("a", "=", "x"), SCHEMA)
    with pytest.raises(TypeMismatch):
        validate_predicate(Compare("s", "=", 5), SCHEMA)
    with pytest.raises(TypeMismatch):
        validate_predicate(Compare("s", "<", "x"), SCHEMA)  # utf8 range op
    with pytest.raises(TypeMismatch):
        validate_predicate(Compare("a", ">", 1.5), SCHEMA)  # float literal on i64
    # int literal widens against f64 column
    norm = validate_predicate(Compare("b", ">", 1), SCHEMA)
    assert norm.literal == 1.0 and isinstance(norm.literal, float)


def test_compile_matches_hand_cases():
    rows = [(1, 10.0, "x"), (2, 20.0, "y"), (3, 30.0, "z")]
    match = compile_predicate(Compare("a", ">=", 2), SCHEMA)
    assert [match(r) for r in rows] == [False, True, True]
    match = compile_predicate(Not(Or((Compare("a", "=", 1), Compare("s", "=", "z")))), SCHEMA)
    assert [match(r) for r in rows] == [False, True, False]
    match = compile_predicate(TRUE, SCHEMA)
    assert all(match(r) for r in rows)


def test_compile_agrees_with_recursive_oracle():
    rng = random.Random(42)
    for _ in range(200):
        table = random_table(rng, 40)
        pred = validate_predicate(random_predicate(rng, MIXED_SCHEMA), MIXED_SCHEMA)
        match = compile_predicate(pred, MIXED_SCHEMA)
        for row in table.rows:
            assert match(row) == eval_predicate(pred, MIXED_SCHEMA, row)


def test_prune_examples():
    zones = {"a": (1, 3)}
    assert can_prune(Compare("a", ">", 5), zones) is True
    assert can_prune(Compare("a", ">=", 2), zones) is False
    assert can_prune(Compare("a", "=", 0), zones) is True
    assert can_prune(Compare("a", "!=", 2), zones) is False
    assert can_prune(Compare("a", "!=", 2), {"a": (2, 2)}) is True
    assert can_prune(Compare("a", "<", 1), zones) is True
    assert can_prune(Compare("a", "<=", 0), zones) is True


def test_prune_utf8_and_missing_stats_never_prune():
    assert can_prune(Compare("s", "=", "never"), {}) is False
    assert can_prune(Compare("a", ">", 10**9), {}) is False  # empty object, no stats


def test_prune_connectives():
    zones = {"a": (1, 3), "b": (0.0, 1.0)}
    # AND prunes on any conjunct
    assert can_prune(And((Compare("a", ">", 5), Compare("b", "<", 0.5))), zones)
    # OR prunes only when all branches prune
    assert not can_prune(Or((Compare("a", ">", 5), Compare("b", "<", 0.5))), zones)
    assert can_prune(Or((Compare("a", ">", 5), Compare("b", ">", 2.0))), zones)
    # NOT prunes when the inner holds for every row
    assert can_prune(Not(Compare("a", ">=", 1)), zones)
    assert not can_prune(Not(Compare("a", ">=", 2)), zones)
    assert proves_all(Compare("a", "<=", 3), zones)
    assert can_prune(Not(TRUE), zones)


def test_prune_never_drops_matching_rows():
    rng = random.Random(7)
    checked = pruned = 0
    for _ in range(100):
        table = random_table(rng, 50)
        zones = compute_zone_map(table)
        pred = validate_predicate(random_predicate(rng, MIXED_SCHEMA), MIXED_SCHEMA)
        has_match = any(eval_predicate(pred, MIXED_SCHEMA, r) for r in table.rows)
        all_match = len(table.rows) > 0 and all(
            eval_predicate(pred, MIXED_SCHEMA, r) for r in table.rows
        )
        if can_prune(pred, zones):
            pruned += 1
            assert not has_match  # soundness
        if proves_all(pred, zones):
            assert len(table.rows) == 0 or all_match
        checked += 1
    assert checked == 100 and pruned > 0  # the check must actually fire sometimes


def test_equality_conjuncts():
    c1 = Compare("a", "=", 1)
    c2 = Compare("s", "=", "x")
    assert equality_conjuncts(c1) == [c1]
    assert equality_conjuncts(And((c1, Compare("b", ">", 0.0), c2))) == [c1, c2]
    assert equality_conjuncts(Or((c1, c2))) == []
    assert equality_conjuncts(Not(c1)) == []
    assert equality_conjuncts(TRUE) == []
