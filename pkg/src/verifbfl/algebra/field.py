"""Prime field arithmetic.

Hot paths in the prover work on plain ``int`` residues; :class:`FieldElement`
is the checked, operator-friendly wrapper used at API boundaries and in tests.
"""
from __future__ import annotations

from functools import cached_property

import sympy

from verifbfl.errors import DecodeError, DivisionByZero


class Field:
    """GF(p) for a prime p."""

    def __init__(self, p: int, check_prime: bool = True):
        if check_prime and not sympy.isprime(p):
            raise ValueError(f"{p} is not prime")
        self.p = p

    def __repr__(self):
        return f"Field(p={self.p})"

    def __eq__(self, other):
        return isinstance(other, Field) and other.p == self.p

    def __hash__(self):
        return hash(("Field", self.p))

    def __call__(self, value: int) -> "FieldElement":
        return FieldElement(value, self)

    @cached_property
    def width(self) -> int:
        """Canonical encoding width in bytes."""
        return (self.p.bit_length() + 7) // 8

    @cached_property
    def half(self) -> int:
        return self.p // 2

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise DivisionByZero("inversion of zero")
        return pow(a, -1, self.p)

    def from_signed(self, v: int) -> int:
        return v % self.p

    def to_signed(self, v: int) -> int:
        """Map a residue to (-p/2, p/2]."""
        v %= self.p
        return v - self.p if v > self.half else v

    def encode(self, v: int) -> bytes:
        return (v % self.p).to_bytes(self.width, "little")

    def decode(self, data: bytes) -> int:
        if len(data) != self.width:
            raise DecodeError("bad field element width")
        v = int.from_bytes(data, "little")
        if v >= self.p:
            raise DecodeError("non-canonical field element")
        return v

    def encode_vec(self, vs) -> bytes:
        w, p = self.width, self.p
        return b"".join((v % p).to_bytes(w, "little") for v in vs)


class FieldElement:
    __slots__ = ("value", "field")

    def __init__(self, value: int, field: Field):
        self.field = field
        self.value = int(value) % field.p

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field.p != self.field.p:
                raise ValueError("field mismatch")
            return other.value
        return int(other) % self.field.p

    def __add__(self, other):
        return FieldElement(self.value + self._coerce(other), self.field)

    __radd__ = __add__

    def __sub__(self, other):
        return FieldElement(self.value - self._coerce(other), self.field)

    def __rsub__(self, other):
        return FieldElement(self._coerce(other) - self.value, self.field)

    def __mul__(self, other):
        return FieldElement(self.value * self._coerce(other), self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.value, self.field)

    def inv(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def __truediv__(self, other):
        return self * FieldElement(self._coerce(other), self.field).inv()

    def __pow__(self, e: int):
        if e < 0:
            return self.inv() ** (-e)
        return FieldElement(pow(self.value, e, self.field.p), self.field)

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field.p == other.field.p and self.value == other.value
        if isinstance(other, int):
            return self.value == other % self.field.p
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.p))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"FieldElement({self.value} mod {self.field.p})"

    def to_bytes(self) -> bytes:
        return self.field.encode(self.value)
