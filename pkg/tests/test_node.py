"""Storage-node extension semantics: exec, prune, index, compress, durability."""

import random

import pytest

from generators import MIXED_SCHEMA, random_predicate, random_table
from oracle import eval_predicate

from skyshard import wire
from skyshard.aggregates import SumCountState
from skyshard.errors import (
    DecodeFailed,
    FormatError,
    NotFound,
    TypeMismatch,
    UnknownColumn,
    UnsupportedIndexType,
)
from skyshard.model import (
    ColumnType,
    ObjectName,
    Schema,
    Table,
    decode_object,
    encode_object,
    seal_table,
)
from skyshard.node import NodeCore
from skyshard.predicate import TRUE, Compare, validate_predicate
from skyshard.query import ALL, AggSpec, SubQuery

I64 = ColumnType.INT64
F64 = ColumnType.FLOAT64

AB = Schema([("a", I64), ("b", I64)])
AB_ROWS = [(1, 10), (2, 20), (3, 30)]


@pytest.fixture
def core(tmp_path):
    c = NodeCore("n0", tmp_path / "node")
    yield c
    c.close()


def _put_table(core, dataset, table, index=0) -> ObjectName:
    name = ObjectName(dataset, index)
    core.put_object(name, encode_object(seal_table(table)))
    return name


def test_put_get_roundtrip(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))
    data = core.get_object(name)
    assert decode_object(data).to_table().rows == tuple(AB_ROWS)


def test_put_rejects_garbage(core):
    with pytest.raises(FormatError):
        core.put_object(ObjectName("t", 0), b"not an object")
    with pytest.raises(NotFound):
        core.get_object(ObjectName("t", 0))  # nothing stored


def test_put_last_writer_wins(core):
    name = ObjectName("t", 0)
    core.put_object(name, encode_object(seal_table(Table(AB, [(1, 1)]))))
    second = encode_object(seal_table(Table(AB, [(2, 2)])))
    core.put_object(name, second)
    assert core.get_object(name) == second


def test_exec_select_project_example(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))
    result = core.exec_extension(name, SubQuery(("b",), Compare("a", ">=", 2)))
    assert result.table.rows == ((20,), (30,))
    assert result.ordinals == (1, 2)
    assert result.table.schema.names == ("b",)


def test_exec_aggregate_example(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))
    state = core.exec_extension(
        name, SubQuery(ALL, Compare("a", ">", 1), AggSpec("sum", "b"))
    )
    assert state == SumCountState(50, 2, is_float=False)


def test_exec_errors(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))
    with pytest.raises(NotFound):
        core.exec_extension(ObjectName("t", 9), SubQuery(ALL, TRUE))
    with pytest.raises(UnknownColumn):
        core.exec_extension(name, SubQuery(("zz",), TRUE))
    with pytest.raises(UnknownColumn):
        core.exec_extension(name, SubQuery(ALL, Compare("zz", "=", 1)))
    with pytest.raises(TypeMismatch):
        core.exec_extension(name, SubQuery(ALL, Compare("a", "=", "str")))


def test_exec_does_not_mutate_object(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))
    before = core.get_object(name)
    core.exec_extension(name, SubQuery(ALL, Compare("a", "=", 2)))
    assert core.get_object(name) == before


def test_exec_matches_scan_oracle(core):
    rng = random.Random(55)
    table = random_table(rng, 1000)
    name = _put_table(core, "rand", table)
    for _ in range(25):
        pred = validate_predicate(random_predicate(rng, MIXED_SCHEMA), MIXED_SCHEMA)
        result = core.exec_extension(name, SubQuery(ALL, pred))
        expected = [
            (i, row)
            for i, row in enumerate(table.rows)
            if eval_predicate(pred, MIXED_SCHEMA, row)
        ]
        assert list(result.ordinals) == [i for i, _ in expected]
        assert list(result.table.rows) == [r for _, r in expected]


def test_prune_check(core):
    name = _put_table(core, "t", Table(AB, AB_ROWS))  # a in [1,3]
    assert core.prune_check(name, Compare("a", ">", 5)) is True
    assert core.prune_check(name, Compare("a", ">=", 2)) is False
    with pytest.raises(NotFound):
        core.prune_check(ObjectName("t", 9), TRUE)


def test_prune_implies_empty_result(core):
    rng = random.Random(4)
    pruned = 0
    for i in range(100):
        table = random_table(rng, 30)
        name = _put_table(core, "pp", table, index=i)
        pred = validate_predicate(random_predicate(rng, MIXED_SCHEMA), MIXED_SCHEMA)
        if core.prune_check(name, pred):
            pruned += 1
            result = core.exec_extension(name, SubQuery(ALL, pred))
            assert result.table.rows == ()
    assert pruned > 0


def test_build_index_and_lookup(core):
    table = Table(Schema([("a", I64)]), [(5,), (7,), (5,)])
    name = _put_table(core, "ix", table, index=3)
    assert core.build_index(name, "a") == 2
    assert core.lookup_index("ix", "a", 5) == [(3, [0, 2])]
    assert core.lookup_index("ix", "a", 7) == [(3, [1])]
    assert core.lookup_index("ix", "a", 6) == []


def test_build_index_refuses_floats(core):
    name = _put_table(core, "fx", Table(Schema([("f", F64)]), [(1.0,)]))
    with pytest.raises(UnsupportedIndexType):
        core.build_index(name, "f")


def test_index_rebuild_after_overwrite(core):
    name = ObjectName("ow", 0)
    core.put_object(name, encode_object(seal_table(Table(Schema([("a", I64)]), [(1,)]))))
    core.build_index(name, "a")
    core.put_object(name, encode_object(seal_table(Table(Schema([("a", I64)]), [(2,)]))))
    core.build_index(name, "a")
    assert core.lookup_index("ow", "a", 1) == []
    assert core.lookup_index("ow", "a", 2) == [(0, [0])]


def test_index_lookup_matches_full_scan(core):
    rng = random.Random(2)
    values = [rng.randint(0, 40) for _ in range(10_000)]
    table = Table(Schema([("k", I64)]), [(v,) for v in values])
    name = _put_table(core, "big", table)
    distinct = core.build_index(name, "k")
    assert distinct == len(set(values))
    for v in set(values):
        expected = [i for i, x in enumerate(values) if x == v]
        assert core.lookup_index("big", "k", v) == [(0, expected)]


def test_compress_roundtrip_and_transparency(core):
    table = Table(AB, [(i % 5, i % 7) for i in range(500)])
    name = _put_table(core, "cz", table)
    original = core.get_object(name)
    assert core.compress_object(name, wire.COMPRESS_MODE_COMPRESS) is True
    packed = core.get_object(name)
    assert len(packed) < len(original)
    assert decode_object(packed).compressed
    # idempotent per mode
    assert core.compress_object(name, wire.COMPRESS_MODE_COMPRESS) is False
    # extension results identical on compressed objects
    sq = SubQuery(ALL, Compare("a", "=", 3))
    want = core.exec_extension(name, sq)
    assert core.compress_object(name, wire.COMPRESS_MODE_DECOMPRESS) is True
    assert core.get_object(name) == original  # byte-identical after the cycle
    assert core.exec_extension(name, sq) == want


def test_compress_missing(core):
    with pytest.raises(NotFound):
        core.compress_object(ObjectName("zz", 0), wire.COMPRESS_MODE_COMPRESS)


def test_node_restart_serves_acked_objects(tmp_path):
    core = NodeCore("n0", tmp_path / "node")
    data = encode_object(seal_table(Table(AB, AB_ROWS)))
    core.put_object(ObjectName("t", 0), data)
    core.close()
    reopened = NodeCore("n0", tmp_path / "node")
    assert reopened.get_object(ObjectName("t", 0)) == data
    reopened.close()


def test_server_status_codes(make_cluster):
    cluster = make_cluster(1)
    server = cluster.servers[0]
    core = server.core
    import socket

    sock = socket.create_connection(server.address, timeout=10)

    def roundtrip(rid, mtype, payload):
        sock.sendall(wire.encode_frame(wire.Frame(rid, mtype, payload)))
        return wire.read_frame(sock)

    # missing object -> status 1
    frame = roundtrip(1, wire.MSG_GET_OBJECT, wire.build_get("nope.00000000"))
    assert frame.payload[0] == 1
    # garbage put -> status 2
    frame = roundtrip(2, wire.MSG_PUT_OBJECT, wire.build_put("d.00000000", b"junk"))
    assert frame.payload[0] == 2
    # exec unknown column -> status 3
    core.put_object(ObjectName("d", 0), encode_object(seal_table(Table(AB, AB_ROWS))))
    frame = roundtrip(3, wire.MSG_EXEC, wire.build_exec("d.00000000", "SELECT zz FROM d"))
    assert frame.payload[0] == 3
    # exec type mismatch -> status 4
    frame = roundtrip(
        4, wire.MSG_EXEC, wire.build_exec("d.00000000", "SELECT * FROM d WHERE a = 'x'")
    )
    assert frame.payload[0] == 4
    # lookup before build -> status 5
    frame = roundtrip(5, wire.MSG_LOOKUP_INDEX, wire.build_lookup_index("d", "a", 1))
    assert frame.payload[0] == 5
    # SUBMIT_QUERY is for the driver service -> 255
    frame = roundtrip(6, wire.MSG_SUBMIT_QUERY, wire.build_submit_query("SELECT * FROM d"))
    assert frame.payload[0] == 255
    sock.close()
