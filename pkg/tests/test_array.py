"""Hyperslab reads/writes over chunk objects versus a dense in-memory oracle."""

import random
import threading

import numpy as np
import pytest

from skyshard.array import ArrayFacade, Hyperslab, mirror_write, native_write
from skyshard.errors import DatasetExists, LengthMismatch, OutOfBounds
from skyshard.model import ColumnType
from skyshard.partition import ArraySpec

F64 = ColumnType.FLOAT64
I64 = ColumnType.INT64


@pytest.fixture
def facade2(cluster2, make_driver):
    return ArrayFacade(make_driver(cluster2))


def test_create_is_lazy(cluster2, facade2):
    record = facade2.create_array("lazy", ArraySpec(F64, (8, 8), (4, 4)))
    assert len(record.objects) == 4
    for core in cluster2.cores:
        assert core.store.names() == []  # nothing materialized yet


def test_read_unwritten_is_fill(facade2):
    facade2.create_array("fill", ArraySpec(F64, (8, 8), (4, 4)))
    out = facade2.read_hyperslab("fill", Hyperslab((0, 0), (8, 8)))
    assert out.shape == (8, 8)
    assert not out.any()


def test_create_duplicate_rejected(facade2):
    facade2.create_array("dup", ArraySpec(F64, (4,), (2,)))
    with pytest.raises(DatasetExists):
        facade2.create_array("dup", ArraySpec(F64, (4,), (2,)))


def test_slab_validation(facade2):
    facade2.create_array("v", ArraySpec(F64, (8, 8), (4, 4)))
    with pytest.raises(OutOfBounds):
        facade2.read_hyperslab("v", Hyperslab((5, 0), (4, 4)))
    with pytest.raises(OutOfBounds):
        facade2.read_hyperslab("v", Hyperslab((0,), (4,)))
    with pytest.raises(OutOfBounds):
        Hyperslab((0, 0), (0, 4))
    with pytest.raises(LengthMismatch):
        facade2.write_hyperslab("v", Hyperslab((0, 0), (2, 2)), [1.0] * 5)


def test_aligned_write_skips_read(cluster2, facade2):
    facade2.create_array("al", ArraySpec(F64, (8, 8), (4, 4)))
    ops = []
    lock = threading.Lock()

    def hook(op, name):
        with lock:
            ops.append((op, name))

    for core in cluster2.cores:
        core.fault_hook = hook
    try:
        facade2.write_hyperslab("al", Hyperslab((0, 0), (4, 4)), np.ones((4, 4)))
    finally:
        for core in cluster2.cores:
            core.fault_hook = None
    kinds = [op for op, _ in ops]
    assert kinds == ["put"]  # one put, no read


def test_unaligned_write_touches_four_chunks(cluster2, facade2):
    facade2.create_array("un", ArraySpec(F64, (4, 4), (2, 2)))
    touched = facade2.write_hyperslab("un", Hyperslab((1, 1), (2, 2)), np.ones((2, 2)))
    assert touched == 4
    out = facade2.read_hyperslab("un", Hyperslab((0, 0), (4, 4)))
    want = np.zeros((4, 4))
    want[1:3, 1:3] = 1.0
    assert (out == want).all()


def test_read_after_write_identity(facade2):
    facade2.create_array("rw", ArraySpec(I64, (10, 7), (4, 3)))
    rng = np.random.default_rng(0)
    data = rng.integers(-100, 100, size=(5, 6))
    slab = Hyperslab((2, 1), (5, 6))
    facade2.write_hyperslab("rw", slab, data)
    assert (facade2.read_hyperslab("rw", slab) == data).all()


def test_read_spans_written_and_unwritten(facade2):
    facade2.create_array("mix", ArraySpec(F64, (8,), (4,)))
    facade2.write_hyperslab("mix", Hyperslab((0,), (4,)), np.full(4, 2.5))
    out = facade2.read_hyperslab("mix", Hyperslab((0,), (8,)))
    assert (out[:4] == 2.5).all() and (out[4:] == 0.0).all()


def test_randomized_dense_oracle(make_cluster, make_driver):
    rng = random.Random(42)
    nprng = np.random.default_rng(42)
    cluster = make_cluster(2)
    facade = ArrayFacade(make_driver(cluster))
    for case in range(12):
        rank = rng.randint(1, 3)
        shape = tuple(rng.randint(2, 9) for _ in range(rank))
        chunk = tuple(rng.randint(1, s) for s in shape)
        dtype = rng.choice([F64, I64])
        name = f"dense{case}"
        facade.create_array(name, ArraySpec(dtype, shape, chunk))
        dense = np.zeros(shape, dtype="<f8" if dtype is F64 else "<i8")
        for _ in range(6):
            slab_shape = tuple(rng.randint(1, s) for s in shape)
            offset = tuple(rng.randint(0, s - w) for s, w in zip(shape, slab_shape))
            slab = Hyperslab(offset, slab_shape)
            if dtype is F64:
                data = nprng.random(slab_shape)
            else:
                data = nprng.integers(-50, 50, size=slab_shape)
            facade.write_hyperslab(name, slab, data)
            sel = tuple(slice(o, o + w) for o, w in zip(offset, slab_shape))
            dense[sel] = data
            read_shape = tuple(rng.randint(1, s) for s in shape)
            read_off = tuple(rng.randint(0, s - w) for s, w in zip(shape, read_shape))
            rslab = Hyperslab(read_off, read_shape)
            got = facade.read_hyperslab(name, rslab)
            rsel = tuple(slice(o, o + w) for o, w in zip(read_off, read_shape))
            assert (got == dense[rsel]).all()


def test_mirror_write_split_is_even(cluster2, make_driver):
    driver = make_driver(cluster2)
    facade = ArrayFacade(driver)
    node_ids = driver.pool.node_ids()
    results = mirror_write(
        facade, total_bytes=1 << 20, node_subsets=[node_ids[:1], node_ids[:2]],
        chunk_bytes=1 << 18,
    )
    assert [r["nodes"] for r in results] == [1, 2]
    assert all(r["seconds"] > 0 for r in results)
    # the two-node run split chunk objects evenly across both stores
    counts = [
        sum(1 for n in core.store.names() if n.startswith("mirrorbench_1_2"))
        for core in cluster2.cores
    ]
    assert counts[0] == counts[1] > 0


def test_native_write_reports(tmp_path):
    report = native_write(1 << 20, tmp_path / "native", chunk_bytes=1 << 18)
    assert report["chunks"] == 4
    assert report["bytes"] == 1 << 20
    assert report["seconds"] > 0
