"""Fiat-Shamir transcript over SHA-256."""
from __future__ import annotations

import hashlib


def _lp(b: bytes) -> bytes:
    return len(b).to_bytes(8, "little") + b


class Transcript:
    def __init__(self, label: bytes = b"verifbfl"):
        self.label = label
        self._state = hashlib.sha256(b"verifbfl/transcript/v1" + _lp(label)).digest()

    def absorb(self, label: bytes, data: bytes) -> None:
        self._state = hashlib.sha256(self._state + _lp(label) + _lp(data)).digest()

    def challenge(self, label: bytes, p: int) -> int:
        """Uniform element of [0, p) by masked rejection sampling."""
        bits = p.bit_length()
        if bits > 256:
            raise ValueError("modulus wider than the hash output")
        mask = (1 << bits) - 1
        ctr = 0
        while True:
            out = hashlib.sha256(
                self._state + b"challenge" + _lp(label) + ctr.to_bytes(4, "little")
            ).digest()
            v = int.from_bytes(out, "little") & mask
            if v < p:
                break
            ctr += 1
        self._state = hashlib.sha256(self._state + b"squeezed" + out).digest()
        return v

    def fork(self) -> "Transcript":
        t = Transcript.__new__(Transcript)
        t.label = self.label
        t._state = self._state
        return t

    @property
    def state(self) -> bytes:
        return self._state
