"""Threaded TCP server shell shared by storage nodes and the driver service.

One thread per connection reads frames; each frame is handled on a worker
pool and the response is written under a per-connection lock, so pipelined
requests on one connection can complete out of order and one connection
never blocks another.
"""

from __future__ import annotations

import logging
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

from . import wire
from .errors import (
    AddressInUse,
    FrameTooLarge,
    ProtocolError,
    Truncated,
    STATUS_BAD_REQUEST,
    STATUS_INTERNAL,
)

logger = logging.getLogger(__name__)

Dispatch = Callable[[wire.Frame], tuple[int, bytes]]


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        server: WireServer = self.server.owner
        send_lock = threading.Lock()
        sock = self.request
        while True:
            try:
                frame = wire.read_frame(sock)
            except FrameTooLarge as e:
                _reply(
                    sock,
                    send_lock,
                    getattr(e, "request_id", 0),
                    getattr(e, "msg_type", 0x7F),
                    STATUS_BAD_REQUEST,
                    str(e).encode("utf-8"),
                )
                continue
            except (Truncated, ProtocolError, ConnectionError, OSError):
                return
            if frame is None:
                return
            server.executor.submit(_serve_one, sock, send_lock, frame, server.dispatch)


def _serve_one(sock, send_lock, frame: wire.Frame, dispatch: Dispatch) -> None:
    try:
        status, body = dispatch(frame)
    except Exception as e:  # a failing request must not kill the connection
        logger.exception("request %d failed", frame.request_id)
        status, body = STATUS_INTERNAL, str(e).encode("utf-8")
    _reply(sock, send_lock, frame.request_id, frame.msg_type, status, body)


def _reply(sock, send_lock, request_id: int, msg_type: int, status: int, body: bytes):
    try:
        with send_lock:
            wire.send_frame(
                sock,
                wire.Frame(
                    request_id,
                    msg_type | wire.RESPONSE_FLAG,
                    bytes([status]) + body,
                ),
            )
    except OSError:
        pass


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class WireServer:
    def __init__(self, dispatch: Dispatch, host: str = "127.0.0.1", port: int = 0,
                 max_workers: int = 32, name: str = "wire"):
        self.dispatch = dispatch
        self.executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix=name)
        try:
            self._tcp = _TCPServer((host, port), _Handler, bind_and_activate=True)
        except OSError as e:
            self.executor.shutdown(wait=False)
            if e.errno == 98:  # EADDRINUSE
                raise AddressInUse(f"{host}:{port} already in use") from e
            raise
        self._tcp.owner = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        addr = self._tcp.server_address
        return addr[0], addr[1]

    def serve_forever(self) -> None:
        self._tcp.serve_forever(poll_interval=0.1)

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        self.executor.shutdown(wait=False)
        if self._thread is not None:
            self._thread.join(timeout=5)
