"""Canonical tagged binary encoding for ledger values, plus a JSON mirror.

Supported values: None, bool, int, bytes, str, Fraction, list/tuple,
set/frozenset (encoded sorted) and dict (keys sorted by their encoding).
"""
from __future__ import annotations

import struct
from fractions import Fraction

from verifbfl.errors import DecodeError

_NONE, _BOOL, _INT, _BYTES, _STR, _LIST, _DICT, _FRAC, _SET = range(9)


def _int_bytes(v: int) -> bytes:
    mag = abs(v)
    body = mag.to_bytes((mag.bit_length() + 7) // 8, "big")
    return bytes([1 if v < 0 else 0]) + struct.pack("<I", len(body)) + body


def encode_value(v) -> bytes:
    if v is None:
        return bytes([_NONE])
    if isinstance(v, bool):
        return bytes([_BOOL, int(v)])
    if isinstance(v, int):
        return bytes([_INT]) + _int_bytes(int(v))
    if isinstance(v, (bytes, bytearray)):
        return bytes([_BYTES]) + struct.pack("<I", len(v)) + bytes(v)
    if isinstance(v, str):
        b = v.encode("utf-8")
        return bytes([_STR]) + struct.pack("<I", len(b)) + b
    if isinstance(v, Fraction):
        return bytes([_FRAC]) + _int_bytes(v.numerator) + _int_bytes(v.denominator)
    if isinstance(v, (list, tuple)):
        parts = [encode_value(x) for x in v]
        return bytes([_LIST]) + struct.pack("<I", len(parts)) + b"".join(parts)
    if isinstance(v, (set, frozenset)):
        parts = sorted(encode_value(x) for x in v)
        return bytes([_SET]) + struct.pack("<I", len(parts)) + b"".join(parts)
    if isinstance(v, dict):
        items = sorted((encode_value(k), encode_value(x)) for k, x in v.items())
        return bytes([_DICT]) + struct.pack("<I", len(items)) + b"".join(k + x for k, x in items)
    raise TypeError(f"cannot encode {type(v).__name__}")


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated value")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def int_(self) -> int:
        sign = self.take(1)[0]
        if sign > 1:
            raise DecodeError("bad sign byte")
        body = self.take(self.u32())
        if body[:1] == b"\x00":
            raise DecodeError("non-minimal integer")
        v = int.from_bytes(body, "big")
        if sign and v == 0:
            raise DecodeError("negative zero")
        return -v if sign else v


def _decode(c: _Cursor):
    tag = c.take(1)[0]
    if tag == _NONE:
        return None
    if tag == _BOOL:
        b = c.take(1)[0]
        if b > 1:
            raise DecodeError("bad bool")
        return bool(b)
    if tag == _INT:
        return c.int_()
    if tag == _BYTES:
        return c.take(c.u32())
    if tag == _STR:
        try:
            return c.take(c.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("bad utf-8") from exc
    if tag == _FRAC:
        num, den = c.int_(), c.int_()
        if den <= 0:
            raise DecodeError("bad denominator")
        return Fraction(num, den)
    if tag == _LIST:
        return [_decode(c) for _ in range(c.u32())]
    if tag == _SET:
        return frozenset(_freeze(_decode(c)) for _ in range(c.u32()))
    if tag == _DICT:
        out = {}
        for _ in range(c.u32()):
            k = _freeze(_decode(c))
            out[k] = _decode(c)
        return out
    raise DecodeError(f"unknown tag {tag}")


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def decode_value(data: bytes):
    c = _Cursor(bytes(data))
    v = _decode(c)
    if c.pos != len(c.data):
        raise DecodeError("trailing bytes")
    return v


def to_jsonable(v):
    """JSON-friendly mirror: bytes as 0x-hex, fractions as "a/b", sets sorted."""
    if isinstance(v, (bytes, bytearray)):
        return "0x" + bytes(v).hex()
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, (set, frozenset)):
        return sorted((to_jsonable(x) for x in v), key=repr)
    if isinstance(v, dict):
        return {_json_key(k): to_jsonable(x) for k, x in sorted(v.items(), key=lambda kv: encode_value(kv[0]))}
    return v


def _json_key(k) -> str:
    if isinstance(k, str):
        return k
    if isinstance(k, tuple):
        return "|".join(_json_key(x) for x in k)
    j = to_jsonable(k)
    return j if isinstance(j, str) else str(j)
