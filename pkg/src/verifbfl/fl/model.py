"""Quantized MLP models: file format, digests and the fixed-point forward pass.

File layout (all integers little-endian)::

    b"VBFLM1" | arch tag (u32 len + utf-8) | u32 ndims | ndims * u32 dims
    | u8 scale_bits | u8 value_bits | u32 round | owner (u32 len + utf-8)
    | u32 field width | modulus | weights as field elements

Weights are stored layer by layer, each as the row-major (out, in) matrix
followed by the bias vector.  Negative integers use the ``p - |v|``
convention.  The content address of a model is SHA-256 of exactly these
bytes; the in-circuit digest is the sponge hash of the field elements alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from verifbfl.algebra import Field
from verifbfl.circuits.fixedpoint import FixedPointConfig, quantize_array, rescale_int
from verifbfl.circuits.sponge import DOMAIN_MODEL, hash_elements
from verifbfl.codec import Reader, Writer
from verifbfl.errors import DecodeError, RangeViolation, ShapeError, UnsupportedArch

MAGIC = b"VBFLM1"
ARCH_MLP = "mlp"


@dataclass
class QuantizedModel:
    dims: tuple
    layers: list  # [(W int array (out, in), b int array (out,))]
    cfg: FixedPointConfig = field(default_factory=FixedPointConfig)
    round: int = 0
    owner: str = ""
    arch: str = ARCH_MLP

    def __post_init__(self):
        if self.arch != ARCH_MLP:
            raise UnsupportedArch(f"unsupported architecture {self.arch!r}")
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise UnsupportedArch("an MLP needs at least an input and an output layer")
        if len(self.layers) != len(self.dims) - 1:
            raise ShapeError("layer count does not match dims")
        fixed = []
        for (W, b), n_in, n_out in zip(self.layers, self.dims[:-1], self.dims[1:]):
            W = np.asarray(W, dtype=np.int64).reshape(n_out, n_in)
            b = np.asarray(b, dtype=np.int64).reshape(n_out)
            fixed.append((W, b))
        self.layers = fixed
        bound = self.cfg.bound
        for v in self.flat():
            if not -bound <= v < bound:
                raise RangeViolation(f"weight {v} exceeds {self.cfg.value_bits}-bit range")

    @classmethod
    def from_float(cls, dims, float_layers, cfg=None, **kw) -> "QuantizedModel":
        cfg = cfg or FixedPointConfig()
        layers = [(quantize_array(W, cfg), quantize_array(b, cfg)) for W, b in float_layers]
        return cls(tuple(dims), layers, cfg, **kw)

    @classmethod
    def zeros(cls, dims, cfg=None, **kw) -> "QuantizedModel":
        dims = tuple(dims)
        layers = [(np.zeros((o, i), np.int64), np.zeros(o, np.int64)) for i, o in zip(dims[:-1], dims[1:])]
        return cls(dims, layers, cfg or FixedPointConfig(), **kw)

    @classmethod
    def from_flat(cls, dims, flat, cfg=None, **kw) -> "QuantizedModel":
        dims = tuple(dims)
        flat = [int(v) for v in flat]
        if len(flat) != num_params(dims):
            raise ShapeError(f"expected {num_params(dims)} parameters, got {len(flat)}")
        layers = []
        pos = 0
        for n_in, n_out in zip(dims[:-1], dims[1:]):
            W = np.array(flat[pos : pos + n_in * n_out], dtype=np.int64).reshape(n_out, n_in)
            pos += n_in * n_out
            b = np.array(flat[pos : pos + n_out], dtype=np.int64)
            pos += n_out
            layers.append((W, b))
        return cls(dims, layers, cfg or FixedPointConfig(), **kw)

    def flat(self) -> list:
        out = []
        for W, b in self.layers:
            out.extend(int(v) for v in W.reshape(-1))
            out.extend(int(v) for v in b)
        return out

    def float_layers(self):
        one = float(self.cfg.one)
        return [(W / one, b / one) for W, b in self.layers]

    def with_meta(self, round=None, owner=None) -> "QuantizedModel":
        return QuantizedModel(self.dims, [(W.copy(), b.copy()) for W, b in self.layers], self.cfg,
                              self.round if round is None else round,
                              self.owner if owner is None else owner, self.arch)

    def field_elements(self, p: int) -> list:
        return [v % p for v in self.flat()]

    def digest(self, p: int) -> int:
        """Sponge digest carried in proof public IO."""
        return hash_elements(p, self.field_elements(p), DOMAIN_MODEL)

    def to_bytes(self, p: int) -> bytes:
        f = Field(p, check_prime=False)
        w = Writer().raw(MAGIC).text(self.arch).u32(len(self.dims))
        for d in self.dims:
            w.u32(d)
        w.u8(self.cfg.scale_bits).u8(self.cfg.value_bits).u32(self.round).text(self.owner)
        w.u32(f.width).raw(p.to_bytes(f.width, "little"))
        w.raw(f.encode_vec(self.field_elements(p)))
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes):
        """Returns ``(model, p)``."""
        r = Reader(data)
        if r.raw(len(MAGIC)) != MAGIC:
            raise DecodeError("bad model magic")
        arch = r.text()
        nd = r.u32()
        if nd > 64:
            raise DecodeError("too many layers")
        dims = tuple(r.u32() for _ in range(nd))
        s, b = r.u8(), r.u8()
        rnd = r.u32()
        owner = r.text()
        width = r.u32()
        if not 0 < width <= 64:
            raise DecodeError("bad field width")
        p = int.from_bytes(r.raw(width), "little")
        if p < 3:
            raise DecodeError("bad modulus")
        f = Field(p, check_prime=False)
        try:
            cfg = FixedPointConfig(s, b)
            n = num_params(dims)
        except (ValueError, UnsupportedArch) as exc:
            raise DecodeError(str(exc)) from exc
        if n * width != len(data) - r.pos:
            raise DecodeError("weight payload has the wrong length")
        flat = [f.to_signed(r.felem(f)) for _ in range(n)]
        r.done()
        try:
            return cls.from_flat(dims, flat, cfg, round=rnd, owner=owner, arch=arch), p
        except (UnsupportedArch, RangeViolation, ShapeError) as exc:
            raise DecodeError(str(exc)) from exc


def num_params(dims) -> int:
    if len(dims) < 2:
        raise UnsupportedArch("an MLP needs at least an input and an output layer")
    return sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))


def forward_int(model: QuantizedModel, x) -> list:
    """Fixed-point logits for one quantized input; mirrors the circuit exactly.

    Hidden layers use ReLU.  Raises RangeViolation when a rescaled value
    leaves the signed value range (the circuit would be unsatisfiable).
    """
    s = model.cfg.scale_bits
    bound = model.cfg.bound
    h = [int(v) for v in x]
    last = len(model.layers) - 1
    for li, (W, b) in enumerate(model.layers):
        out = []
        for row, bias in zip(W.tolist(), b.tolist()):
            acc = sum(w * v for w, v in zip(row, h)) + (bias << s)
            q = rescale_int(acc, s)
            if not -bound <= q < bound:
                raise RangeViolation("activation overflow")
            out.append(q if li == last or q >= 0 else 0)
        h = out
    return h


def argmax_lowest(values) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def predict(model: QuantizedModel, x) -> int:
    return argmax_lowest(forward_int(model, x))
