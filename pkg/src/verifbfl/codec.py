"""Strict little-endian binary reader/writer used by every wire format."""
from __future__ import annotations

import struct

from verifbfl.errors import DecodeError


class Writer:
    def __init__(self):
        self._parts = []

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(bytes(b))
        return self

    def u8(self, v: int) -> "Writer":
        return self.raw(struct.pack("<B", v))

    def u32(self, v: int) -> "Writer":
        return self.raw(struct.pack("<I", v))

    def u64(self, v: int) -> "Writer":
        return self.raw(struct.pack("<Q", v))

    def blob(self, b: bytes) -> "Writer":
        return self.u32(len(b)).raw(b)

    def text(self, s: str) -> "Writer":
        return self.blob(s.encode("utf-8"))

    def felem(self, field, v: int) -> "Writer":
        return self.raw(field.encode(v))

    def fvec(self, field, vs) -> "Writer":
        self.u32(len(vs))
        return self.raw(field.encode_vec(vs))

    def point(self, group, a) -> "Writer":
        return self.raw(group.encode(a))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self.data = bytes(data)
        self.pos = 0

    def raw(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.raw(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.raw(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.raw(8))[0]

    def blob(self, limit: int = 1 << 30) -> bytes:
        n = self.u32()
        if n > limit:
            raise DecodeError("length prefix too large")
        return self.raw(n)

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid utf-8") from exc

    def felem(self, field) -> int:
        return field.decode(self.raw(field.width))

    def fvec(self, field, limit: int = 1 << 24) -> list:
        n = self.u32()
        if n > limit or n * field.width > len(self.data) - self.pos:
            raise DecodeError("vector length exceeds input")
        return [self.felem(field) for _ in range(n)]

    def point(self, group):
        return group.decode(self.raw(group.element_width))

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes")
