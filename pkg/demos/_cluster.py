"""Shared helper: a throwaway in-process cluster for the demos."""

from __future__ import annotations

import tempfile
from pathlib import Path

from skyshard import Driver, NodeCore, NodeServer
from skyshard.client import NodeInfo


def start_cluster(n_nodes: int = 2):
    """Returns (driver, shutdown_fn) over n in-process storage nodes."""
    base = Path(tempfile.mkdtemp(prefix="skyshard-demo-"))
    servers = []
    infos = []
    for i in range(n_nodes):
        server = NodeServer(NodeCore(f"n{i}", base / f"n{i}"))
        server.start_background()
        servers.append(server)
        infos.append(NodeInfo(f"n{i}", *server.address))
    driver = Driver(infos, base / "catalog.json")

    def shutdown():
        driver.close()
        for s in servers:
            s.shutdown()

    return driver, shutdown
