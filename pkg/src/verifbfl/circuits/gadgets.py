"""Bit decomposition, range checks, comparisons and fixed-point rescaling.

Signed integers live in the field as ``v mod p``; a value is "b-bit signed"
when ``-2^(b-1) <= v < 2^(b-1)``.  All gadgets take hints from the current
wire values and constrain them, so the same code serves shape recording and
witness generation.
"""
from __future__ import annotations

from verifbfl.errors import RangeViolation


def signed(value: int, p: int) -> int:
    return value - p if value > p // 2 else value


def to_bits(cs, x, nbits: int):
    """Little-endian booleans with sum 2^i b_i == x; ``nbits + 1`` constraints."""
    v = x.value
    if cs.check and v >> nbits:
        raise RangeViolation(f"value does not fit in {nbits} bits")
    bits = []
    acc = cs.const(0)
    for i in range(nbits):
        b = cs.alloc((v >> i) & 1)
        cs.enforce(b, b - 1, cs.const(0))
        bits.append(b)
        acc = acc + b * (1 << i)
    cs.enforce_equal(acc, x)
    return bits


def range_check(cs, x, nbits: int) -> None:
    """0 <= x < 2^nbits."""
    to_bits(cs, x, nbits)


def signed_range_check(cs, x, nbits: int):
    """-2^(nbits-1) <= x < 2^(nbits-1); returns the non-negativity bit."""
    cs.track(signed(x.value, cs.p))
    bits = to_bits(cs, x + (1 << (nbits - 1)), nbits)
    return bits[-1]


def is_less_than(cs, a, b, nbits: int):
    """Bit [a < b] for operands known to be nbits-bit unsigned."""
    bits = to_bits(cs, a - b + (1 << nbits), nbits + 1)
    return 1 - bits[-1]


def assert_geq(cs, a, b, nbits: int) -> None:
    """a - b in [0, 2^nbits)."""
    range_check(cs, a - b, nbits)


def is_zero(cs, x):
    """Bit [x == 0] via the inverse hint."""
    p = cs.p
    inv = pow(x.value, -1, p) if x.value else 0
    m = cs.alloc(inv)
    nz = cs.mul(x, m)
    cs.enforce(x, 1 - nz, cs.const(0))
    return 1 - nz


def boolean(cs, value: int):
    b = cs.alloc(value)
    cs.enforce(b, b - 1, cs.const(0))
    return b


def rescale(cs, acc, s: int, b: int):
    """Round-half-up division by 2^s of a signed accumulator.

    Hints q, r with ``acc + 2^(s-1) = q*2^s + r``, ``0 <= r < 2^s`` and q
    b-bit signed.  Returns ``(q, nonneg_bit)``.
    """
    p = cs.p
    a = signed(acc.value, p)
    q_val = (a + (1 << (s - 1))) >> s
    r_val = a + (1 << (s - 1)) - (q_val << s)
    q = cs.alloc(q_val)
    r = cs.alloc(r_val)
    cs.enforce_equal(acc + (1 << (s - 1)), q * (1 << s) + r)
    range_check(cs, r, s)
    nonneg = signed_range_check(cs, q, b)
    return q, nonneg


def relu(cs, q, nonneg):
    return cs.mul(q, nonneg)
