"""Operator command line.

    skyshard node serve    --node-id n1 [--config c.json | --listen H:P --data-dir D]
    skyshard driver serve  --config c.json --listen H:P
    skyshard load-csv      DATASET FILE [--target-rows N] [--overwrite]
    skyshard query         "SELECT ..." [--json]
    skyshard index build   DATASET COLUMN
    skyshard bench write-scaling --size-mb N --node-counts 1,2,4 [--json]
    skyshard bench pushdown --rows N --selectivity F [--json]

The cluster config comes from --config or $SKYSHARD_CONFIG. Query output is
deterministic: a tab-separated header line and rows in global dataset
order; scalar results print bare.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys

from .bench import make_driver, render_report, run_pushdown, run_write_scaling
from .config import ENV_CONFIG, load_config, resolve_config_path
from .csvload import load_csv
from .driver import Driver, DriverServer
from .errors import AddressInUse, BadConfig, ParseError, SkyshardError
from .model import Table
from .node import NodeCore, NodeServer
from .partition import PartitionPolicy
from .query import parse_query


def _split_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise BadConfig(f"bad address {addr!r}, expected host:port")
    return host, int(port)


def _config(args) -> "ClusterConfig":
    return load_config(resolve_config_path(args.config))


def cmd_node_serve(args) -> int:
    if args.listen and args.data_dir:
        host, port = _split_address(args.listen)
        data_dir = args.data_dir
    else:
        entry = _config(args).node(args.node_id)
        host, port = entry.host, entry.port
        data_dir = entry.data_dir
    try:
        server = NodeServer(NodeCore(args.node_id, data_dir), host, port)
    except AddressInUse as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    bound_host, bound_port = server.address
    print(f"skyshard node {args.node_id} listening on {bound_host}:{bound_port}", flush=True)
    _serve_until_signal(server)
    return 0


def cmd_driver_serve(args) -> int:
    config = _config(args)
    host, port = _split_address(args.listen)
    driver = make_driver(config)
    try:
        server = DriverServer(driver, host, port)
    except AddressInUse as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    bound_host, bound_port = server.address
    print(f"skyshard driver listening on {bound_host}:{bound_port}", flush=True)
    _serve_until_signal(server)
    driver.close()
    return 0


def _serve_until_signal(server) -> None:
    def stop(signum, _frame):
        server.shutdown()

    signal.signal(signal.SIGTERM, stop)
    signal.signal(signal.SIGINT, stop)
    try:
        server.serve_forever()
    except (KeyboardInterrupt, OSError):
        server.shutdown()


def cmd_load_csv(args) -> int:
    config = _config(args)
    table = load_csv(args.file)
    driver = make_driver(config)
    try:
        policy = PartitionPolicy(target_rows=args.target_rows)
        pmap = driver.write_table(args.dataset, table, policy, overwrite=args.overwrite)
    finally:
        driver.close()
    if args.json:
        doc = {
            "dataset": args.dataset,
            "rows": len(table),
            "objects": len(pmap.entries),
            "placement": [
                {"object": e.name.render(), "node": e.node_id, "rows": list(e.row_range)}
                for e in pmap.entries
            ],
        }
        print(json.dumps(doc, indent=1))
    else:
        print(f"{len(pmap.entries)} objects ({len(table)} rows)")
        for e in pmap.entries:
            start, stop = e.row_range
            print(f"  {e.name.render()} rows [{start}, {stop}) -> {e.node_id}")
    return 0


def format_cell(v) -> str:
    return str(v)


def cmd_query(args) -> int:
    config = _config(args)
    try:
        query = parse_query(args.text)
    except ParseError as e:
        print(e.caret_message(), file=sys.stderr)
        return 1
    driver = make_driver(config)
    try:
        result = driver.execute(query)
    finally:
        driver.close()
    if isinstance(result, Table):
        if args.json:
            doc = {
                "columns": list(result.schema.names),
                "rows": [list(r) for r in result.rows],
            }
            print(json.dumps(doc))
        else:
            print("\t".join(result.schema.names))
            for row in result.rows:
                print("\t".join(format_cell(v) for v in row))
    else:
        if args.json:
            print(json.dumps({"scalar": result}))
        else:
            print(format_cell(result))
    return 0


def cmd_index_build(args) -> int:
    config = _config(args)
    driver = make_driver(config)
    try:
        count = driver.build_index(args.dataset, args.column)
    finally:
        driver.close()
    print(f"indexed {args.dataset}.{args.column}: {count} object-local entries")
    return 0


def cmd_bench_write_scaling(args) -> int:
    config = _config(args)
    node_counts = [int(x) for x in args.node_counts.split(",") if x]
    driver = make_driver(config)
    try:
        report = run_write_scaling(driver, args.size_mb, node_counts, chunk_mb=args.chunk_mb)
    finally:
        driver.close()
    print(json.dumps(report, indent=1) if args.json else render_report(report))
    return 0


def cmd_bench_pushdown(args) -> int:
    config = _config(args)
    driver = make_driver(config)
    try:
        report = run_pushdown(driver, args.rows, args.selectivity, target_rows=args.target_rows)
    finally:
        driver.close()
    print(json.dumps(report, indent=1) if args.json else render_report(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skyshard",
        description="Miniature distributed object storage with query pushdown.",
    )
    parser.add_argument(
        "--config", help=f"cluster config path (or ${ENV_CONFIG})", default=None
    )
    sub = parser.add_subparsers(dest="command", required=True)

    node = sub.add_parser("node", help="storage node commands")
    node_sub = node.add_subparsers(dest="node_command", required=True)
    serve = node_sub.add_parser("serve", help="run a storage node")
    serve.add_argument("--node-id", required=True)
    serve.add_argument("--listen", help="host:port (else from config)")
    serve.add_argument("--data-dir", help="storage directory (else from config)")
    serve.set_defaults(fn=cmd_node_serve)

    drv = sub.add_parser("driver", help="driver service commands")
    drv_sub = drv.add_subparsers(dest="driver_command", required=True)
    dserve = drv_sub.add_parser("serve", help="run the query service")
    dserve.add_argument("--listen", required=True, help="host:port")
    dserve.set_defaults(fn=cmd_driver_serve)

    load = sub.add_parser("load-csv", help="ingest a CSV file as a dataset")
    load.add_argument("dataset")
    load.add_argument("file")
    load.add_argument("--target-rows", type=int, default=4096)
    load.add_argument("--overwrite", action="store_true")
    load.add_argument("--json", action="store_true")
    load.set_defaults(fn=cmd_load_csv)

    q = sub.add_parser("query", help="run a query")
    q.add_argument("text")
    q.add_argument("--json", action="store_true")
    q.set_defaults(fn=cmd_query)

    index = sub.add_parser("index", help="index commands")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    ib = index_sub.add_parser("build", help="build an equality index")
    ib.add_argument("dataset")
    ib.add_argument("column")
    ib.set_defaults(fn=cmd_index_build)

    bench = sub.add_parser("bench", help="benchmarks")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    ws = bench_sub.add_parser("write-scaling", help="parallel write scaling")
    ws.add_argument("--size-mb", type=int, required=True)
    ws.add_argument("--node-counts", default="1,2,4")
    ws.add_argument("--chunk-mb", type=int, default=4)
    ws.add_argument("--json", action="store_true")
    ws.set_defaults(fn=cmd_bench_write_scaling)
    pd = bench_sub.add_parser("pushdown", help="pushdown vs fetch-then-filter")
    pd.add_argument("--rows", type=int, required=True)
    pd.add_argument("--selectivity", type=float, required=True)
    pd.add_argument("--target-rows", type=int, default=4096)
    pd.add_argument("--json", action="store_true")
    pd.set_defaults(fn=cmd_bench_pushdown)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SkyshardError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
