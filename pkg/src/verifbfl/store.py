"""Content-addressed object store.

Addresses are SHA-256 digests of the exact object bytes.  Objects live in an
in-memory map and, when a directory is given, also under
``<root>/objects/<hex digest>``.
"""
from __future__ import annotations

import hashlib
import os
import threading
from pathlib import Path

from verifbfl.errors import NotFound

DIGEST_SIZE = 32


class ContentAddress(bytes):
    """A 32-byte SHA-256 digest."""

    def __new__(cls, digest: bytes):
        digest = bytes(digest)
        if len(digest) != DIGEST_SIZE:
            raise ValueError("content address must be 32 bytes")
        return super().__new__(cls, digest)

    @classmethod
    def of(cls, data: bytes) -> "ContentAddress":
        return cls(hashlib.sha256(data).digest())

    @classmethod
    def from_hex(cls, text: str) -> "ContentAddress":
        return cls(bytes.fromhex(text))

    def __str__(self):
        return self.hex()

    def __repr__(self):
        return f"ContentAddress({self.hex()[:16]}…)"


class ContentStore:
    def __init__(self, root=None):
        self._objects: dict = {}
        self._lock = threading.Lock()
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            (self.root / "objects").mkdir(parents=True, exist_ok=True)

    def _path(self, addr: bytes) -> Path:
        return self.root / "objects" / bytes(addr).hex()

    def put(self, data: bytes) -> ContentAddress:
        data = bytes(data)
        addr = ContentAddress.of(data)
        with self._lock:
            if addr in self._objects:
                return addr
            self._objects[addr] = data
            if self.root is not None:
                path = self._path(addr)
                if not path.exists():
                    tmp = path.with_suffix(f".tmp{threading.get_ident()}")
                    tmp.write_bytes(data)
                    os.replace(tmp, path)
        return addr

    def get(self, addr) -> bytes:
        addr = bytes(addr)
        with self._lock:
            data = self._objects.get(addr)
        if data is None and self.root is not None and len(addr) == DIGEST_SIZE:
            path = self._path(addr)
            if path.exists():
                data = path.read_bytes()
        if data is None or hashlib.sha256(data).digest() != addr:
            raise NotFound(f"no object at {addr.hex()}")
        return data

    def __contains__(self, addr) -> bool:
        try:
            self.get(addr)
        except NotFound:
            return False
        return True

    def __len__(self):
        return len(self._objects)
