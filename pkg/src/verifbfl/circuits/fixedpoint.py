"""Fixed-point encoding of reals as field elements."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from verifbfl.errors import QuantizeOverflow, RangeViolation


@dataclass(frozen=True)
class FixedPointConfig:
    scale_bits: int = 16
    value_bits: int = 32

    def __post_init__(self):
        if not 0 < self.scale_bits < self.value_bits:
            raise ValueError("need 0 < scale_bits < value_bits")

    @property
    def one(self) -> int:
        return 1 << self.scale_bits

    @property
    def bound(self) -> int:
        """Exclusive bound on |value| for a stored integer."""
        return 1 << (self.value_bits - 1)

    def min_field_bits(self, fan_in: int) -> int:
        """A dot product of fan_in b-bit values (plus bias) must not wrap."""
        return 2 * self.value_bits + max(1, math.ceil(math.log2(fan_in + 1))) + 1

    def check_field(self, p: int, fan_in: int) -> None:
        if p.bit_length() <= self.min_field_bits(fan_in):
            raise RangeViolation(
                f"{p.bit_length()}-bit field too small for fan-in {fan_in} at {self.value_bits}-bit values"
            )


def quantize_array(values, cfg: FixedPointConfig) -> np.ndarray:
    """Round-half-to-even to integers at scale 2^s; returns int64."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise QuantizeOverflow("non-finite weight")
    limit = 2.0 ** (cfg.value_bits - cfg.scale_bits - 1)
    if arr.size and np.max(np.abs(arr)) >= limit:
        raise QuantizeOverflow(f"|weight| must be < {limit}")
    return np.rint(arr * cfg.one).astype(np.int64)


def quantize(value: float, cfg: FixedPointConfig) -> int:
    return int(quantize_array([value], cfg)[0])


def dequantize(q, cfg: FixedPointConfig):
    return np.asarray(q, dtype=np.float64) / cfg.one


def to_field(v: int, p: int) -> int:
    return int(v) % p


def from_field(v: int, p: int) -> int:
    return v - p if v > p // 2 else v


def rescale_int(acc: int, s: int) -> int:
    """Integer twin of the rescale gadget: floor((acc + 2^(s-1)) / 2^s)."""
    return (acc + (1 << (s - 1))) >> s
