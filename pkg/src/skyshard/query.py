"""The query language: text grammar, parser, and query/sub-query types.

    query := SELECT (proj | agg) FROM ident [WHERE pred]
    proj  := '*' | ident (',' ident)*
    agg   := fn '(' ident ')' ['BINS' int] ['RANGE' num num]
    pred  := or-expr; precedence NOT > AND > OR; parentheses allowed
    cmp   := ident (= | != | < | <= | > | >=) literal
    literal := integer | decimal | 'single-quoted string' ('' escapes a quote)

Keywords and aggregate names are case-insensitive; identifiers are not.
``TRUE`` is accepted as a predicate. RANGE fixes a histogram's [lo, hi) and
is only meaningful with median_approx - the driver normally derives it from
a min/max pre-pass, and uses it when shipping sub-queries to nodes.

One parser serves the CLI, the driver, the storage nodes, and remote
clients, so a query can round-trip render -> parse -> render unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError, TypeMismatch, UnknownColumn
from .model import ColumnType, Schema
from .predicate import (
    TRUE,
    And,
    Compare,
    Not,
    Or,
    Predicate,
    TruePred,
    render_predicate,
    validate_predicate,
)

AGG_FUNCTIONS = ("count", "sum", "min", "max", "avg", "median", "median_approx")
DEFAULT_HISTOGRAM_BINS = 1024

ALL = "*"


@dataclass(frozen=True)
class AggSpec:
    fn: str
    column: str
    bins: int = DEFAULT_HISTOGRAM_BINS

    def __post_init__(self) -> None:
        if self.fn not in AGG_FUNCTIONS:
            raise ValueError(f"unknown aggregate {self.fn!r}")
        if self.bins < 1:
            raise ValueError("bins must be positive")


@dataclass(frozen=True)
class Query:
    dataset: str
    projection: tuple[str, ...] | str  # column names or ALL
    predicate: Predicate
    aggregate: AggSpec | None = None
    histogram_range: tuple[float, float] | None = None

    @property
    def is_aggregate(self) -> bool:
        return self.aggregate is not None


@dataclass(frozen=True)
class SubQuery:
    """The per-object restriction of a query: what one node executes."""

    projection: tuple[str, ...] | str
    predicate: Predicate
    aggregate: AggSpec | None = None
    histogram_params: tuple[float, float, int] | None = None


def validate_query(q: Query, schema: Schema) -> Query:
    """Check names and literal types against a schema; canonicalize literals."""
    pred = validate_predicate(q.predicate, schema)
    if q.aggregate is not None:
        agg = q.aggregate
        ctype = schema.column_type(agg.column)
        if agg.fn != "count" and not ctype.is_numeric:
            raise TypeMismatch(f"{agg.fn} needs a numeric column, {agg.column!r} is utf8")
        if q.histogram_range is not None and agg.fn != "median_approx":
            raise TypeMismatch("RANGE is only meaningful with median_approx")
        return Query(q.dataset, ALL, pred, agg, q.histogram_range)
    if q.projection == ALL:
        return Query(q.dataset, ALL, pred, None)
    for name in q.projection:
        if not schema.has_column(name):
            raise UnknownColumn(f"no column {name!r}")
    return Query(q.dataset, q.projection, pred, None)


def subquery_for(q: Query, histogram_params=None) -> SubQuery:
    if q.aggregate is not None:
        return SubQuery(ALL, q.predicate, q.aggregate, histogram_params)
    return SubQuery(q.projection, q.predicate, None, None)


# --- rendering ---------------------------------------------------------------


def render_subquery(dataset: str, sq: SubQuery) -> str:
    """Sub-queries travel as query text; nodes re-parse with this grammar."""
    if sq.aggregate is not None:
        agg = sq.aggregate
        sel = f"{agg.fn}({agg.column})"
        if agg.fn == "median_approx":
            sel += f" BINS {agg.bins}"
            if sq.histogram_params is not None:
                lo, hi, _ = sq.histogram_params
                sel += f" RANGE {lo!r} {hi!r}"
    elif sq.projection == ALL:
        sel = "*"
    else:
        sel = ", ".join(sq.projection)
    text = f"SELECT {sel} FROM {dataset}"
    if not isinstance(sq.predicate, TruePred):
        text += f" WHERE {render_predicate(sq.predicate)}"
    return text


def render_query(q: Query) -> str:
    sq = subquery_for(
        q,
        None
        if q.histogram_range is None
        else (q.histogram_range[0], q.histogram_range[1], q.aggregate.bins),
    )
    return render_subquery(q.dataset, sq)


# --- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(\.\d*)?([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[(),*-])
    """,
    re.VERBOSE,
)

KEYWORDS = {"select", "from", "where", "and", "or", "not", "true", "bins", "range"}


@dataclass(frozen=True)
class _Token:
    kind: str  # keyword | ident | number | string | op | punct | end
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        if m.lastgroup != "ws":
            kind = m.lastgroup
            tok = m.group()
            if kind == "ident" and tok.lower() in KEYWORDS:
                kind = "keyword"
            tokens.append(_Token(kind, tok, pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.cur.pos, self.text)

    def advance(self) -> _Token:
        tok = self.cur
        self.i += 1
        return tok

    def expect_keyword(self, word: str) -> None:
        if self.cur.kind == "keyword" and self.cur.text.lower() == word:
            self.advance()
            return
        raise self.error(f"expected {word.upper()}")

    def at_keyword(self, word: str) -> bool:
        return self.cur.kind == "keyword" and self.cur.text.lower() == word

    def expect_punct(self, ch: str) -> None:
        if self.cur.kind == "punct" and self.cur.text == ch:
            self.advance()
            return
        raise self.error(f"expected {ch!r}")

    def at_punct(self, ch: str) -> bool:
        return self.cur.kind == "punct" and self.cur.text == ch

    def expect_ident(self, what: str) -> str:
        if self.cur.kind == "ident":
            return self.advance().text
        raise self.error(f"expected {what}")

    # query := SELECT (proj | agg) FROM ident [WHERE pred]
    def parse_query(self) -> Query:
        self.expect_keyword("select")
        projection: tuple[str, ...] | str
        aggregate = None
        hist_range = None
        if self.at_punct("*"):
            self.advance()
            projection = ALL
        elif self.cur.kind == "ident":
            first = self.advance().text
            if self.at_punct("("):
                aggregate, hist_range = self.parse_agg_tail(first)
                projection = ALL
            else:
                names = [first]
                while self.at_punct(","):
                    self.advance()
                    names.append(self.expect_ident("column name"))
                projection = tuple(names)
        else:
            raise self.error("expected '*', column list, or aggregate")
        self.expect_keyword("from")
        dataset = self.expect_ident("dataset name")
        predicate: Predicate = TRUE
        if self.at_keyword("where"):
            self.advance()
            predicate = self.parse_or()
        if self.cur.kind != "end":
            raise self.error("unexpected trailing input")
        return Query(dataset, projection, predicate, aggregate, hist_range)

    def parse_agg_tail(self, fn_name: str):
        fn = fn_name.lower()
        if fn not in AGG_FUNCTIONS:
            raise ParseError(
                f"unknown aggregate {fn_name!r}", self.tokens[self.i - 1].pos, self.text
            )
        self.expect_punct("(")
        column = self.expect_ident("column name")
        self.expect_punct(")")
        bins = DEFAULT_HISTOGRAM_BINS
        hist_range = None
        if self.at_keyword("bins"):
            self.advance()
            if self.cur.kind != "number" or "." in self.cur.text:
                raise self.error("expected integer after BINS")
            bins = int(self.advance().text)
            if bins < 1:
                raise ParseError("BINS must be positive", self.tokens[self.i - 1].pos, self.text)
        if self.at_keyword("range"):
            self.advance()
            lo = float(self.parse_signed_number())
            hi = float(self.parse_signed_number())
            hist_range = (lo, hi)
        return AggSpec(fn, column, bins), hist_range

    # pred: OR lowest, then AND, then NOT, then atoms
    def parse_or(self) -> Predicate:
        left = self.parse_and()
        items = [left]
        while self.at_keyword("or"):
            self.advance()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> Predicate:
        items = [self.parse_not()]
        while self.at_keyword("and"):
            self.advance()
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_not(self) -> Predicate:
        if self.at_keyword("not"):
            self.advance()
            return Not(self.parse_not())
        return self.parse_atom()

    def parse_atom(self) -> Predicate:
        if self.at_punct("("):
            self.advance()
            inner = self.parse_or()
            self.expect_punct(")")
            return inner
        if self.at_keyword("true"):
            self.advance()
            return TRUE
        if self.cur.kind == "ident":
            column = self.advance().text
            if self.cur.kind != "op":
                raise self.error("expected comparison operator")
            op = self.advance().text
            literal = self.parse_literal()
            return Compare(column, op, literal)
        raise self.error("expected predicate")

    def parse_signed_number(self):
        negate = False
        if self.at_punct("-"):
            self.advance()
            negate = True
        if self.cur.kind != "number":
            raise self.error("expected number")
        text = self.advance().text
        value = int(text) if re.fullmatch(r"\d+", text) else float(text)
        return -value if negate else value

    def parse_literal(self):
        if self.cur.kind == "string":
            raw = self.advance().text
            return raw[1:-1].replace("''", "'")
        return self.parse_signed_number()


def parse_query(text: str) -> Query:
    return _Parser(text).parse_query()


def parse_subquery(text: str) -> tuple[str, SubQuery]:
    """Parse shipped sub-query text; returns (dataset, SubQuery)."""
    q = _Parser(text).parse_query()
    params = None
    if q.aggregate is not None and q.histogram_range is not None:
        lo, hi = q.histogram_range
        params = (lo, hi, q.aggregate.bins)
    return q.dataset, SubQuery(q.projection, q.predicate, q.aggregate, params)
