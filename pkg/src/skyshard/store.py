"""Durable one-file-per-object chunk store.

Writes go to a temp file, get fsync'd, and are renamed into place, so an
acknowledged put survives a hard kill. Whole-object replace gives
last-writer-wins semantics at object granularity.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from .errors import IoError, NotFound


class ObjectStore:
    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.objects_dir = self.root / "objects"
        self.tmp_dir = self.root / "tmp"
        self.objects_dir.mkdir(parents=True, exist_ok=True)
        self.tmp_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._name_locks: dict[str, threading.Lock] = {}
        self._seq = 0
        for leftover in self.tmp_dir.iterdir():  # crash debris
            leftover.unlink(missing_ok=True)

    def _lock_for(self, name: str) -> threading.Lock:
        with self._lock:
            lock = self._name_locks.get(name)
            if lock is None:
                lock = self._name_locks[name] = threading.Lock()
            self._seq += 1
            return lock

    def _tmp_path(self) -> Path:
        with self._lock:
            self._seq += 1
            return self.tmp_dir / f"w{os.getpid()}-{self._seq}"

    def put(self, name: str, data: bytes) -> None:
        """Durably persist; mutations to one name are serialized."""
        tmp = self._tmp_path()
        with self._lock_for(name):
            try:
                fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o644)
                try:
                    os.write(fd, data)
                    os.fsync(fd)
                finally:
                    os.close(fd)
                os.replace(tmp, self.objects_dir / name)
                dir_fd = os.open(self.objects_dir, os.O_RDONLY)
                try:
                    os.fsync(dir_fd)
                finally:
                    os.close(dir_fd)
            except OSError as e:
                raise IoError(f"put {name!r}: {e}") from e

    def get(self, name: str) -> bytes:
        try:
            return (self.objects_dir / name).read_bytes()
        except FileNotFoundError:
            raise NotFound(f"object {name!r}") from None
        except OSError as e:
            raise IoError(f"get {name!r}: {e}") from e

    def exists(self, name: str) -> bool:
        return (self.objects_dir / name).exists()

    def names(self) -> list[str]:
        return sorted(p.name for p in self.objects_dir.iterdir() if p.is_file())
