"""Cluster configuration file.

JSON schema (see README for a commented example):

    {
      "nodes": [
        {"node_id": "n1", "address": "127.0.0.1:7101", "data_dir": "data/n1"}
      ],
      "driver": {"catalog": "data/catalog.json", "fanout": 16}
    }

The path comes from --config or the SKYSHARD_CONFIG environment variable.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .client import NodeInfo
from .errors import BadConfig

ENV_CONFIG = "SKYSHARD_CONFIG"


@dataclass(frozen=True)
class NodeEntry:
    node_id: str
    address: str
    data_dir: Path

    @property
    def host(self) -> str:
        return self.address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.address.rsplit(":", 1)[1])


@dataclass(frozen=True)
class ClusterConfig:
    nodes: tuple[NodeEntry, ...]
    catalog: Path
    fanout: int = 16

    def node_infos(self) -> list[NodeInfo]:
        return [NodeInfo(n.node_id, n.host, n.port) for n in self.nodes]

    def node(self, node_id: str) -> NodeEntry:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise BadConfig(f"node {node_id!r} not in config")


def _parse_address(addr: str) -> None:
    host, sep, port = addr.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) < 65536:
        raise BadConfig(f"bad address {addr!r}, expected host:port")


def load_config(path: str | Path) -> ClusterConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise BadConfig(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise BadConfig(f"config file {path}: {e}") from None
    base = path.parent
    try:
        raw_nodes = doc["nodes"]
        if not isinstance(raw_nodes, list) or not raw_nodes:
            raise BadConfig("config needs a non-empty nodes list")
        nodes = []
        for n in raw_nodes:
            _parse_address(n["address"])
            nodes.append(
                NodeEntry(
                    node_id=str(n["node_id"]),
                    address=n["address"],
                    data_dir=(base / n["data_dir"]).resolve(),
                )
            )
        ids = [n.node_id for n in nodes]
        if len(set(ids)) != len(ids) or any(not i for i in ids):
            raise BadConfig("node ids must be unique and non-empty")
        driver = doc.get("driver", {})
        catalog = (base / driver.get("catalog", "catalog.json")).resolve()
        fanout = int(driver.get("fanout", 16))
        if fanout < 1:
            raise BadConfig("fanout must be >= 1")
        return ClusterConfig(nodes=tuple(nodes), catalog=catalog, fanout=fanout)
    except KeyError as e:
        raise BadConfig(f"config missing key {e.args[0]!r}") from None


def resolve_config_path(flag_value: str | None) -> Path:
    value = flag_value or os.environ.get(ENV_CONFIG)
    if not value:
        raise BadConfig(f"pass --config or set {ENV_CONFIG}")
    return Path(value)
