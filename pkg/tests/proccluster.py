"""Spawn real node/driver processes through the CLI for external-interface tests."""

from __future__ import annotations

import json
import os
import re
import signal
import subprocess
import sys
import time
from pathlib import Path

READY_RE = re.compile(r"listening on ([\w.\-]+):(\d+)")


class ProcCluster:
    """N `skyshard node serve` subprocesses plus a config file pointing at them."""

    def __init__(self, base_dir: Path, n: int, fanout: int = 16):
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.procs: list[subprocess.Popen] = []
        self.nodes: list[dict] = []
        for i in range(n):
            node_id = f"n{i}"
            data_dir = self.base_dir / node_id
            proc = subprocess.Popen(
                [
                    sys.executable, "-m", "skyshard", "node", "serve",
                    "--node-id", node_id,
                    "--listen", "127.0.0.1:0",
                    "--data-dir", str(data_dir),
                ],
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                text=True,
            )
            line = proc.stdout.readline()
            m = READY_RE.search(line)
            if not m:
                proc.kill()
                raise RuntimeError(f"node {node_id} failed to start: {line!r}")
            self.procs.append(proc)
            self.nodes.append(
                {
                    "node_id": node_id,
                    "address": f"{m.group(1)}:{m.group(2)}",
                    "data_dir": str(data_dir),
                }
            )
        self.config_path = self.base_dir / "cluster.json"
        self.config_path.write_text(
            json.dumps(
                {
                    "nodes": self.nodes,
                    "driver": {"catalog": str(self.base_dir / "catalog.json"),
                               "fanout": fanout},
                }
            )
        )

    def cli(self, *args: str, check: bool = True) -> subprocess.CompletedProcess:
        result = subprocess.run(
            [sys.executable, "-m", "skyshard", "--config", str(self.config_path), *args],
            capture_output=True,
            text=True,
            timeout=300,
        )
        if check and result.returncode != 0:
            raise AssertionError(
                f"CLI {' '.join(args)} failed ({result.returncode}):\n"
                f"{result.stdout}\n{result.stderr}"
            )
        return result

    def kill_node(self, i: int, sig=signal.SIGKILL) -> None:
        self.procs[i].send_signal(sig)
        self.procs[i].wait(timeout=10)

    def restart_node(self, i: int) -> None:
        entry = self.nodes[i]
        proc = subprocess.Popen(
            [
                sys.executable, "-m", "skyshard", "node", "serve",
                "--node-id", entry["node_id"],
                "--listen", entry["address"],
                "--data-dir", entry["data_dir"],
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
        )
        deadline = time.time() + 10
        line = proc.stdout.readline()
        if not READY_RE.search(line) and time.time() > deadline:
            proc.kill()
            raise RuntimeError(f"restart failed: {line!r}")
        self.procs[i] = proc

    def shutdown(self) -> None:
        for proc in self.procs:
            if proc.poll() is None:
                proc.send_signal(signal.SIGTERM)
        for proc in self.procs:
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait(timeout=5)
