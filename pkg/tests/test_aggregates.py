"""Partial aggregate states: build, merge, finalize, wire codec."""

import itertools
import math
import random
from fractions import Fraction

import pytest

from skyshard.aggregates import (
    CountState,
    HistogramState,
    MaxState,
    MinState,
    SumCountState,
    ValuesState,
    build_histogram,
    build_state,
    decode_state,
    encode_state,
    finalize,
    float_to_scaled,
    histogram_bin,
    merge_states,
    scaled_to_float,
)
from skyshard.errors import EmptyInput, HistogramParamMismatch, MixedVariants
from skyshard.query import AggSpec


def test_sum_merge_example():
    a = SumCountState(3, 2, is_float=False)
    b = SumCountState(7, 1, is_float=False)
    merged = merge_states(a, b)
    assert finalize(AggSpec("sum", "x"), merged) == 10
    assert merged.n == 3


def test_median_split_examples():
    spec = AggSpec("median", "x")
    parts = [build_state(spec, [1, 3], is_float=False), build_state(spec, [5], is_float=False)]
    assert finalize(spec, merge_states(*parts)) == 3
    parts = [build_state(spec, [4, 2], is_float=False), build_state(spec, [1, 3], is_float=False)]
    assert finalize(spec, merge_states(*parts)) == 2.5


def test_median_approx_hand_computed():
    spec = AggSpec("median_approx", "x", bins=10)
    state = build_histogram([1.0, 1.0, 9.0], 0.0, 10.0, 10)
    approx = finalize(spec, state)
    assert approx == 1.5
    assert abs(approx - 1.0) <= 1.0  # within one bin width of the true median


def test_histogram_binning_edges():
    assert histogram_bin(0.0, 0.0, 10.0, 10) == 0
    assert histogram_bin(10.0, 0.0, 10.0, 10) == 9  # hi lands in the last bin
    assert histogram_bin(-0.1, 0.0, 10.0, 10) == -1
    assert histogram_bin(10.1, 0.0, 10.0, 10) == 10
    assert histogram_bin(5.0, 5.0, 5.0, 4) == 0  # degenerate range


def test_histogram_counts_invariant():
    state = build_histogram([0.5, 3.3, 11.0, -2.0], 0.0, 10.0, 4)
    assert state.n == 4 and state.below == 1 and state.above == 1
    assert sum(state.counts) == 2
    with pytest.raises(ValueError):
        HistogramState(0.0, 1.0, (1, 1), 5, 0, 0)


def test_min_max_empty_shards_merge_away():
    spec_min, spec_max = AggSpec("min", "x"), AggSpec("max", "x")
    empty = build_state(spec_min, [], is_float=False)
    full = build_state(spec_min, [4, 2], is_float=False)
    assert merge_states(empty, full).value == 2
    assert merge_states(full, empty).value == 2
    with pytest.raises(EmptyInput):
        finalize(spec_min, empty)
    with pytest.raises(EmptyInput):
        finalize(spec_max, build_state(spec_max, [], is_float=False))


def test_avg_and_median_empty_error():
    with pytest.raises(EmptyInput):
        finalize(AggSpec("avg", "x"), SumCountState(0, 0, is_float=False))
    with pytest.raises(EmptyInput):
        finalize(AggSpec("median", "x"), ValuesState((), is_float=False))
    with pytest.raises(EmptyInput):
        finalize(AggSpec("median_approx", "x"), build_histogram([], 0.0, 1.0, 4))
    # sum and count have identities
    assert finalize(AggSpec("sum", "x"), SumCountState(0, 0, is_float=False)) == 0
    assert finalize(AggSpec("count", "x"), CountState(0)) == 0


def test_merge_type_guards():
    with pytest.raises(MixedVariants):
        merge_states(CountState(1), MinState(1, is_float=False))
    with pytest.raises(HistogramParamMismatch):
        merge_states(build_histogram([], 0.0, 1.0, 4), build_histogram([], 0.0, 2.0, 4))


def test_scaled_fixed_point_matches_fraction_oracle():
    rng = random.Random(17)
    specials = [0.0, -0.0, 5e-324, -5e-324, 2.2250738585072014e-308, 1.7976931348623157e308]
    values = specials + [rng.uniform(-1e12, 1e12) for _ in range(200)]
    values += [math.ldexp(rng.random(), rng.randint(-1060, 1000)) for _ in range(200)]
    for v in values:
        exact = Fraction(v) * (1 << 1074)
        assert exact.denominator == 1
        assert float_to_scaled(v) == exact.numerator
        assert scaled_to_float(float_to_scaled(v)) == v


def test_float_sum_equals_fsum_for_any_split():
    rng = random.Random(3)
    values = [rng.uniform(-1e6, 1e6) for _ in range(500)]
    spec = AggSpec("sum", "x")
    for _ in range(20):
        cuts = sorted(rng.sample(range(1, len(values)), 4))
        parts = []
        prev = 0
        for c in cuts + [len(values)]:
            parts.append(build_state(spec, values[prev:c], is_float=True))
            prev = c
        rng.shuffle(parts)
        state = parts[0]
        for p in parts[1:]:
            state = merge_states(state, p)
        assert finalize(spec, state) == math.fsum(values)


def _random_states(rng, variant, n_parts):
    if variant == "count":
        return AggSpec("count", "x"), [CountState(rng.randint(0, 9)) for _ in range(n_parts)]
    if variant == "sum_i":
        spec = AggSpec("sum", "x")
        return spec, [build_state(spec, [rng.randint(-99, 99) for _ in range(rng.randint(0, 6))], is_float=False) for _ in range(n_parts)]
    if variant == "sum_f":
        spec = AggSpec("sum", "x")
        return spec, [build_state(spec, [rng.uniform(-9, 9) for _ in range(rng.randint(0, 6))], is_float=True) for _ in range(n_parts)]
    if variant == "min":
        spec = AggSpec("min", "x")
        return spec, [build_state(spec, [rng.uniform(-9, 9) for _ in range(rng.randint(0, 4))], is_float=True) for _ in range(n_parts)]
    if variant == "max":
        spec = AggSpec("max", "x")
        return spec, [build_state(spec, [rng.randint(-9, 9) for _ in range(rng.randint(0, 4))], is_float=False) for _ in range(n_parts)]
    spec = AggSpec("median_approx", "x", bins=8)
    return spec, [
        build_histogram([rng.uniform(0, 10) for _ in range(rng.randint(0, 6))], 0.0, 10.0, 8)
        for _ in range(n_parts)
    ]


def _merge_tree(parts, shape, rng):
    """Merge in a random binary-tree order."""
    items = list(parts)
    while len(items) > 1:
        i = rng.randrange(len(items) - 1)
        items[i : i + 2] = [merge_states(items[i], items[i + 1])]
    return items[0]


def test_merge_order_invariance_randomized():
    rng = random.Random(23)
    for variant in ("count", "sum_i", "sum_f", "min", "max", "hist"):
        spec, parts = _random_states(rng, variant, 5)
        reference = _merge_tree(parts, None, random.Random(0))
        for _ in range(10):
            shuffled = parts[:]
            rng.shuffle(shuffled)
            assert _merge_tree(shuffled, None, rng) == reference


def test_merge_of_concat_equals_concat_state():
    rng = random.Random(11)
    spec = AggSpec("sum", "x")
    xs = [rng.uniform(-5, 5) for _ in range(40)]
    ys = [rng.uniform(-5, 5) for _ in range(17)]
    merged = merge_states(
        build_state(spec, xs, is_float=True), build_state(spec, ys, is_float=True)
    )
    assert merged == build_state(spec, xs + ys, is_float=True)


def test_state_codec_roundtrip_all_variants():
    rng = random.Random(77)
    states = [
        CountState(42),
        SumCountState(float_to_scaled(3.75), 3, is_float=True),
        SumCountState(-(1 << 80), 9, is_float=False),
        MinState(None, is_float=True),
        MinState(-2.5, is_float=True),
        MaxState(7, is_float=False),
        ValuesState((), is_float=False),
        ValuesState((1.5, 2.5, 2.5), is_float=True),
        ValuesState((-3, 0, 9), is_float=False),
        build_histogram([rng.uniform(0, 1) for _ in range(50)], 0.0, 1.0, 16),
    ]
    for state in states:
        data = encode_state(state)
        assert decode_state(data) == state
        assert encode_state(decode_state(data)) == data


def test_avg_division_matches_oracle_rounding():
    rng = random.Random(5)
    values = [rng.uniform(-100, 100) for _ in range(999)]
    spec = AggSpec("avg", "x")
    state = build_state(spec, values, is_float=True)
    assert finalize(spec, state) == math.fsum(values) / len(values)
