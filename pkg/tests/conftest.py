"""Shared fixtures: in-process node clusters and drivers on temp storage."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracle/generators helpers

from skyshard.client import NodeInfo
from skyshard.driver import Driver
from skyshard.node import NodeCore, NodeServer


class Cluster:
    """A set of in-process storage nodes on ephemeral ports."""

    def __init__(self, base_dir: Path, n: int):
        self.servers: list[NodeServer] = []
        for i in range(n):
            core = NodeCore(f"n{i}", base_dir / f"n{i}")
            server = NodeServer(core)
            server.start_background()
            self.servers.append(server)

    @property
    def infos(self) -> list[NodeInfo]:
        return [
            NodeInfo(s.core.node_id, s.address[0], s.address[1]) for s in self.servers
        ]

    @property
    def cores(self) -> list[NodeCore]:
        return [s.core for s in self.servers]

    def shutdown(self) -> None:
        for s in self.servers:
            s.shutdown()


@pytest.fixture
def make_cluster(tmp_path):
    made: list[Cluster] = []
    counter = [0]

    def factory(n: int) -> Cluster:
        counter[0] += 1
        cluster = Cluster(tmp_path / f"cluster{counter[0]}", n)
        made.append(cluster)
        return cluster

    yield factory
    for c in made:
        c.shutdown()


@pytest.fixture
def make_driver(tmp_path):
    made: list[Driver] = []
    counter = [0]

    def factory(cluster: Cluster, optimize: bool = True, catalog=None) -> Driver:
        counter[0] += 1
        path = catalog or tmp_path / f"catalog{counter[0]}.json"
        driver = Driver(cluster.infos, path, optimize=optimize)
        made.append(driver)
        return driver

    yield factory
    for d in made:
        d.close()


@pytest.fixture
def cluster2(make_cluster):
    return make_cluster(2)


@pytest.fixture
def driver2(cluster2, make_driver):
    return make_driver(cluster2)
