"""Mergeable partial aggregate states and their wire codec.

Every aggregate a node can push down returns one of these states; the
driver merges them pairwise in any order. Merging is exactly associative
and commutative for every variant:

* counters and histogram bins are integers;
* min/max fold with comparisons;
* sums are carried exactly - Int64 sums as arbitrary-precision integers,
  Float64 sums as fixed-point integers scaled by 2**1074 (every finite
  double is an integer multiple of 2**-1074). The finalized float is the
  correctly rounded true sum, i.e. exactly ``math.fsum`` of the inputs.

Wire layout (little-endian): variant u8, value-type u8 (0 = i64, 1 = f64),
then per variant as encoded below. Sums travel as a u16 length plus
two's-complement little-endian bytes.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    EmptyInput,
    HistogramParamMismatch,
    MixedVariants,
    Truncated,
    TypeMismatch,
)
from .query import AggSpec

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")

# Smallest subnormal double is 2**-1074, so v * 2**1074 is an integer for
# every finite double v.
_SCALE_BITS = 1074

VARIANT_COUNT = 0
VARIANT_SUM_COUNT = 1
VARIANT_MIN = 2
VARIANT_MAX = 3
VARIANT_VALUES = 4
VARIANT_HISTOGRAM = 5


def float_to_scaled(v: float) -> int:
    """Exact v * 2**1074 as an integer, without Fraction overhead."""
    if v == 0.0:
        return 0
    m, e = math.frexp(v)
    mant = int(math.ldexp(m, 53))  # exact: m has at most 53 significand bits
    shift = e - 53 + _SCALE_BITS
    return mant << shift if shift >= 0 else mant >> -shift


def scaled_to_float(s: int) -> float:
    """Correctly rounded float of s * 2**-1074."""
    return float(Fraction(s, 1 << _SCALE_BITS))


@dataclass(frozen=True)
class CountState:
    n: int


@dataclass(frozen=True)
class SumCountState:
    total: int  # exact: plain integer sum, or scaled by 2**1074 when is_float
    n: int
    is_float: bool

    def total_value(self):
        return scaled_to_float(self.total) if self.is_float else self.total


@dataclass(frozen=True)
class MinState:
    value: int | float | None
    is_float: bool


@dataclass(frozen=True)
class MaxState:
    value: int | float | None
    is_float: bool


@dataclass(frozen=True)
class ValuesState:
    values: tuple
    is_float: bool


@dataclass(frozen=True)
class HistogramState:
    lo: float
    hi: float
    counts: tuple[int, ...]
    n: int
    below: int
    above: int

    def __post_init__(self) -> None:
        if self.n != sum(self.counts) + self.below + self.above:
            raise ValueError("histogram count invariant violated")


PartialAggState = (
    CountState | SumCountState | MinState | MaxState | ValuesState | HistogramState
)


def histogram_bin(v: float, lo: float, hi: float, bins: int) -> int:
    """Bin index for v, or -1 (below lo) / bins (above hi).

    hi is inclusive in the last bin so a min/max-derived range keeps every
    value inside the histogram. A degenerate lo == hi range maps to bin 0.
    """
    if v < lo:
        return -1
    if v > hi:
        return bins
    if lo == hi:
        return 0
    idx = int((v - lo) / (hi - lo) * bins)
    return min(idx, bins - 1)


def build_histogram(values, lo: float, hi: float, bins: int) -> HistogramState:
    counts = [0] * bins
    below = above = 0
    for v in values:
        b = histogram_bin(v, lo, hi, bins)
        if b < 0:
            below += 1
        elif b >= bins:
            above += 1
        else:
            counts[b] += 1
    return HistogramState(lo, hi, tuple(counts), below + above + sum(counts), below, above)


def build_state(spec: AggSpec, values, histogram_params=None, is_float=True) -> PartialAggState:
    """Compute the partial state for one object's filtered column values."""
    fn = spec.fn
    if fn == "count":
        return CountState(len(values))
    if fn in ("sum", "avg"):
        if is_float:
            total = sum(float_to_scaled(v) for v in values)
        else:
            total = sum(values)
        return SumCountState(total, len(values), is_float)
    if fn == "min":
        return MinState(min(values) if values else None, is_float)
    if fn == "max":
        return MaxState(max(values) if values else None, is_float)
    if fn == "median":
        return ValuesState(tuple(sorted(values)), is_float)
    if fn == "median_approx":
        if histogram_params is None:
            raise ValueError("median_approx needs histogram params")
        lo, hi, bins = histogram_params
        return build_histogram(values, lo, hi, bins)
    raise ValueError(f"unknown aggregate {fn!r}")


def merge_states(a: PartialAggState, b: PartialAggState) -> PartialAggState:
    if type(a) is not type(b):
        raise MixedVariants(f"cannot merge {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, CountState):
        return CountState(a.n + b.n)
    if isinstance(a, SumCountState):
        if a.is_float != b.is_float:
            raise MixedVariants("sum states disagree on value type")
        return SumCountState(a.total + b.total, a.n + b.n, a.is_float)
    if isinstance(a, MinState):
        if a.value is None:
            return b
        if b.value is None:
            return a
        return MinState(min(a.value, b.value), a.is_float)
    if isinstance(a, MaxState):
        if a.value is None:
            return b
        if b.value is None:
            return a
        return MaxState(max(a.value, b.value), a.is_float)
    if isinstance(a, ValuesState):
        merged = tuple(_merge_sorted(a.values, b.values))
        return ValuesState(merged, a.is_float)
    if (a.lo, a.hi, len(a.counts)) != (b.lo, b.hi, len(b.counts)):
        raise HistogramParamMismatch(
            f"({a.lo}, {a.hi}, {len(a.counts)}) vs ({b.lo}, {b.hi}, {len(b.counts)})"
        )
    return HistogramState(
        a.lo,
        a.hi,
        tuple(x + y for x, y in zip(a.counts, b.counts)),
        a.n + b.n,
        a.below + b.below,
        a.above + b.above,
    )


def _merge_sorted(xs: tuple, ys: tuple):
    i = j = 0
    while i < len(xs) and j < len(ys):
        if ys[j] < xs[i]:
            yield ys[j]
            j += 1
        else:
            yield xs[i]
            i += 1
    yield from xs[i:]
    yield from ys[j:]


def _histogram_rank_midpoint(state: HistogramState, rank: int) -> float:
    """Midpoint of the first bin whose cumulative count reaches ``rank``."""
    width = (state.hi - state.lo) / len(state.counts)
    cum = state.below
    if cum >= rank:
        return state.lo
    for i, c in enumerate(state.counts):
        cum += c
        if cum >= rank:
            return state.lo + (i + 0.5) * width
    return state.hi


def finalize(spec: AggSpec, state: PartialAggState):
    """Collapse a fully merged state to the query's scalar answer."""
    fn = spec.fn
    if fn == "count":
        return state.n
    if fn == "sum":
        return state.total_value()
    if fn == "avg":
        if state.n == 0:
            raise EmptyInput("avg over zero rows")
        return state.total_value() / state.n
    if fn in ("min", "max"):
        if state.value is None:
            raise EmptyInput(f"{fn} over zero rows")
        return state.value
    if fn == "median":
        vals = state.values
        if not vals:
            raise EmptyInput("median over zero rows")
        mid = len(vals) // 2
        if len(vals) % 2:
            return vals[mid]
        return (vals[mid - 1] + vals[mid]) / 2
    if fn == "median_approx":
        if state.n == 0:
            raise EmptyInput("median over zero rows")
        half = -(-state.n // 2)  # ceil(n/2)
        if state.n % 2:
            return _histogram_rank_midpoint(state, half)
        lo_mid = _histogram_rank_midpoint(state, half)
        hi_mid = _histogram_rank_midpoint(state, half + 1)
        return (lo_mid + hi_mid) / 2
    raise ValueError(f"unknown aggregate {fn!r}")


# --- wire codec --------------------------------------------------------------


def _pack_value(v, is_float: bool) -> bytes:
    return _F64.pack(v) if is_float else _I64.pack(v)


def _unpack_value(data: bytes, pos: int, is_float: bool):
    return (_F64 if is_float else _I64).unpack_from(data, pos)[0]


def _pack_bigint(v: int) -> bytes:
    raw = v.to_bytes((v.bit_length() + 8) // 8, "little", signed=True)
    return _U16.pack(len(raw)) + raw


def encode_state(state: PartialAggState) -> bytes:
    out = bytearray()
    if isinstance(state, CountState):
        out += bytes([VARIANT_COUNT, 0])
        out += _U64.pack(state.n)
    elif isinstance(state, SumCountState):
        out += bytes([VARIANT_SUM_COUNT, 1 if state.is_float else 0])
        out += _pack_bigint(state.total)
        out += _U64.pack(state.n)
    elif isinstance(state, (MinState, MaxState)):
        variant = VARIANT_MIN if isinstance(state, MinState) else VARIANT_MAX
        out += bytes([variant, 1 if state.is_float else 0])
        if state.value is None:
            out += b"\0"
        else:
            out += b"\1"
            out += _pack_value(state.value, state.is_float)
    elif isinstance(state, ValuesState):
        out += bytes([VARIANT_VALUES, 1 if state.is_float else 0])
        out += _U64.pack(len(state.values))
        for v in state.values:
            out += _pack_value(v, state.is_float)
    elif isinstance(state, HistogramState):
        out += bytes([VARIANT_HISTOGRAM, 1])
        out += _F64.pack(state.lo)
        out += _F64.pack(state.hi)
        out += _U32.pack(len(state.counts))
        for c in state.counts:
            out += _U64.pack(c)
        out += _U64.pack(state.n)
        out += _U64.pack(state.below)
        out += _U64.pack(state.above)
    else:
        raise TypeMismatch(f"not a partial aggregate state: {state!r}")
    return bytes(out)


def decode_state(data: bytes) -> PartialAggState:
    if len(data) < 2:
        raise Truncated("aggregate state header")
    variant, vtype = data[0], data[1]
    is_float = vtype == 1
    pos = 2
    if variant == VARIANT_COUNT:
        _need(data, pos, 8)
        return CountState(_U64.unpack_from(data, pos)[0])
    if variant == VARIANT_SUM_COUNT:
        _need(data, pos, 2)
        ln = _U16.unpack_from(data, pos)[0]
        pos += 2
        _need(data, pos, ln + 8)
        total = int.from_bytes(data[pos : pos + ln], "little", signed=True)
        pos += ln
        return SumCountState(total, _U64.unpack_from(data, pos)[0], is_float)
    if variant in (VARIANT_MIN, VARIANT_MAX):
        _need(data, pos, 1)
        present = data[pos]
        pos += 1
        value = None
        if present:
            _need(data, pos, 8)
            value = _unpack_value(data, pos, is_float)
        cls = MinState if variant == VARIANT_MIN else MaxState
        return cls(value, is_float)
    if variant == VARIANT_VALUES:
        _need(data, pos, 8)
        n = _U64.unpack_from(data, pos)[0]
        pos += 8
        _need(data, pos, 8 * n)
        values = tuple(
            _unpack_value(data, pos + 8 * i, is_float) for i in range(n)
        )
        return ValuesState(values, is_float)
    if variant == VARIANT_HISTOGRAM:
        _need(data, pos, 20)
        lo = _F64.unpack_from(data, pos)[0]
        hi = _F64.unpack_from(data, pos + 8)[0]
        bins = _U32.unpack_from(data, pos + 16)[0]
        pos += 20
        _need(data, pos, 8 * bins + 24)
        counts = tuple(_U64.unpack_from(data, pos + 8 * i)[0] for i in range(bins))
        pos += 8 * bins
        n = _U64.unpack_from(data, pos)[0]
        below = _U64.unpack_from(data, pos + 8)[0]
        above = _U64.unpack_from(data, pos + 16)[0]
        return HistogramState(lo, hi, counts, n, below, above)
    raise Truncated(f"unknown aggregate state variant {variant}")


def _need(data: bytes, pos: int, n: int) -> None:
    if pos + n > len(data):
        raise Truncated("aggregate state body")
