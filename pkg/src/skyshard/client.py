"""Client side of the wire protocol: single connections and per-node pools.

Connections are synchronous (one request in flight each); concurrency comes
from the driver's fan-out using several pooled connections. Every byte on
the wire is counted, which is what the pushdown-vs-fetch benchmark reports.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass

from . import wire
from .errors import (
    NodeUnreachable,
    ProtocolError,
    SkyshardError,
    exception_for_status,
    STATUS_OK,
)


class TrafficCounters:
    """Thread-safe sent/received byte totals."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.sent = 0
        self.received = 0

    def add(self, sent: int = 0, received: int = 0) -> None:
        with self._lock:
            self.sent += sent
            self.received += received

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.sent, self.received


class Connection:
    """One socket speaking the frame protocol; not safe for concurrent use."""

    def __init__(self, host: str, port: int, timeout: float = 60.0,
                 counters: TrafficCounters | None = None, ping: bool = False):
        self.address = (host, port)
        self.counters = counters or TrafficCounters()
        self._request_id = 0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError as e:
            raise ConnectionError(f"connect {host}:{port}: {e}") from e
        self._closed = False
        if ping:
            self.call(wire.MSG_PING, b"")

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._sock.close()
            except OSError:
                pass

    def next_request_id(self) -> int:
        self._request_id += 1
        return self._request_id

    def send_request(self, msg_type: int, payload: bytes) -> int:
        rid = self.next_request_id()
        sent = wire.send_frame(self._sock, wire.Frame(rid, msg_type, payload))
        self.counters.add(sent=sent)
        return rid

    def read_response(self, expect_rid: int, expect_type: int) -> tuple[int, bytes]:
        frame = wire.read_frame(self._sock)
        if frame is None:
            raise ConnectionError("connection closed awaiting response")
        self.counters.add(received=13 + len(frame.payload))
        if frame.request_id != expect_rid:
            raise ProtocolError(
                f"response id {frame.request_id}, expected {expect_rid}"
            )
        if frame.msg_type != (expect_type | wire.RESPONSE_FLAG) and frame.msg_type != (
            0x7F | wire.RESPONSE_FLAG
        ):
            raise ProtocolError(f"response type {frame.msg_type:#x} unexpected")
        if not frame.payload:
            raise ProtocolError("empty response payload")
        return frame.payload[0], bytes(frame.payload[1:])

    def request(self, msg_type: int, payload: bytes) -> tuple[int, bytes]:
        """One round trip; returns (status, body)."""
        rid = self.send_request(msg_type, payload)
        return self.read_response(rid, msg_type)

    def call(self, msg_type: int, payload: bytes) -> bytes:
        """One round trip; raises the typed error for non-zero status."""
        status, body = self.request(msg_type, payload)
        if status != STATUS_OK:
            raise exception_for_status(status, body.decode("utf-8", "replace"))
        return body


@dataclass(frozen=True)
class NodeInfo:
    node_id: str
    host: str
    port: int

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"


class NodePool:
    """Reusable connections per node, shared traffic counters."""

    def __init__(self, nodes: list[NodeInfo], timeout: float = 60.0):
        self.nodes = {n.node_id: n for n in nodes}
        if len(self.nodes) != len(nodes):
            raise ValueError("duplicate node ids")
        self.timeout = timeout
        self.counters = TrafficCounters()
        self._idle: dict[str, list[Connection]] = {n.node_id: [] for n in nodes}
        self._lock = threading.Lock()

    def node_ids(self) -> list[str]:
        return list(self.nodes)

    def _connect(self, node_id: str) -> Connection:
        info = self.nodes[node_id]
        try:
            return Connection(info.host, info.port, self.timeout, self.counters)
        except ConnectionError as e:
            raise NodeUnreachable(node_id, str(e)) from e

    def acquire(self, node_id: str) -> Connection:
        with self._lock:
            idle = self._idle[node_id]
            if idle:
                return idle.pop()
        return self._connect(node_id)

    def release(self, node_id: str, conn: Connection) -> None:
        with self._lock:
            self._idle[node_id].append(conn)

    def call(self, node_id: str, msg_type: int, payload: bytes) -> bytes:
        """Borrow a connection for one call; broken connections are dropped."""
        conn = self.acquire(node_id)
        try:
            body = conn.call(msg_type, payload)
        except (ConnectionError, OSError, ProtocolError) as e:
            conn.close()
            raise NodeUnreachable(node_id, str(e)) from e
        except SkyshardError:
            self.release(node_id, conn)
            raise
        self.release(node_id, conn)
        return body

    def close(self) -> None:
        with self._lock:
            for idle in self._idle.values():
                for conn in idle:
                    conn.close()
                idle.clear()
