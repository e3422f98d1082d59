"""Query text grammar: parsing, precedence, rendering, caret errors."""

import random

import pytest

from generators import MIXED_SCHEMA, random_predicate

from skyshard.errors import ParseError
from skyshard.predicate import TRUE, And, Compare, Not, Or, validate_predicate
from skyshard.query import (
    ALL,
    AggSpec,
    Query,
    parse_query,
    parse_subquery,
    render_query,
    render_subquery,
    subquery_for,
)


def test_select_star():
    q = parse_query("SELECT * FROM trips")
    assert q.dataset == "trips"
    assert q.projection == ALL
    assert q.predicate == TRUE
    assert q.aggregate is None


def test_projection_list_keeps_order():
    q = parse_query("select b, a from t")
    assert q.projection == ("b", "a")


def test_where_comparisons():
    q = parse_query("SELECT * FROM t WHERE a >= 10")
    assert q.predicate == Compare("a", ">=", 10)
    q = parse_query("SELECT * FROM t WHERE b < -2.5")
    assert q.predicate == Compare("b", "<", -2.5)
    q = parse_query("SELECT * FROM t WHERE s != 'it''s'")
    assert q.predicate == Compare("s", "!=", "it's")


def test_precedence_not_and_or():
    q = parse_query("SELECT * FROM t WHERE NOT a = 1 AND b = 2 OR c = 3")
    # ((NOT a=1) AND b=2) OR c=3
    assert q.predicate == Or(
        (And((Not(Compare("a", "=", 1)), Compare("b", "=", 2))), Compare("c", "=", 3))
    )


def test_parentheses():
    q = parse_query("SELECT * FROM t WHERE a = 1 AND (b = 2 OR c = 3)")
    assert q.predicate == And(
        (Compare("a", "=", 1), Or((Compare("b", "=", 2), Compare("c", "=", 3))))
    )


def test_true_literal_predicate():
    assert parse_query("SELECT * FROM t WHERE TRUE").predicate == TRUE
    assert parse_query("SELECT * FROM t WHERE NOT true").predicate == Not(TRUE)


def test_aggregates():
    q = parse_query("SELECT count(x) FROM t")
    assert q.aggregate == AggSpec("count", "x")
    q = parse_query("SELECT MEDIAN_APPROX(v) BINS 64 FROM t WHERE v > 0")
    assert q.aggregate == AggSpec("median_approx", "v", 64)
    q = parse_query("SELECT median_approx(v) BINS 8 RANGE -1.5 2.5 FROM t")
    assert q.histogram_range == (-1.5, 2.5)


def test_keywords_case_insensitive():
    q = parse_query("sElEcT SUM(a) fRoM t WhErE a > 1 aNd a < 9")
    assert q.aggregate == AggSpec("sum", "a")


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as e:
        parse_query("SELECT * FROM t WHERE a >")
    assert e.value.position == len("SELECT * FROM t WHERE a >")
    caret = e.value.caret_message().splitlines()
    assert caret[2].index("^") == e.value.position

    with pytest.raises(ParseError) as e:
        parse_query("SELECT frobnicate(a) FROM t")
    assert "frobnicate" in str(e.value)

    with pytest.raises(ParseError):
        parse_query("SELECT * FROM t trailing")
    with pytest.raises(ParseError):
        parse_query("SELECT * FROM t WHERE a ~ 3")
    with pytest.raises(ParseError):
        parse_query("SELECT median_approx(v) BINS 0 FROM t")


def test_render_parse_roundtrip_randomized():
    rng = random.Random(31)
    for _ in range(150):
        pred = validate_predicate(random_predicate(rng, MIXED_SCHEMA), MIXED_SCHEMA)
        q = Query("ds", ("a", "s"), pred)
        text = render_query(q)
        again = parse_query(text)
        assert again.predicate == pred
        assert render_query(again) == text


def test_subquery_roundtrip_with_histogram_params():
    q = Query("ds", ALL, Compare("b", ">", 0.5), AggSpec("median_approx", "b", 32))
    sq = subquery_for(q, histogram_params=(0.5, 9.25, 32))
    text = render_subquery("ds", sq)
    dataset, back = parse_subquery(text)
    assert dataset == "ds"
    assert back.aggregate == sq.aggregate
    assert back.histogram_params == (0.5, 9.25, 32)
    assert back.predicate == sq.predicate


def test_subquery_projection_roundtrip():
    sq = subquery_for(Query("ds", ("b", "a"), Compare("s", "=", "x y")))
    dataset, back = parse_subquery(render_subquery("ds", sq))
    assert back.projection == ("b", "a")
    assert back.predicate == Compare("s", "=", "x y")
