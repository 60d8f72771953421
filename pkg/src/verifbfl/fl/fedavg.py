"""Volume-weighted averaging of quantized models."""
from __future__ import annotations

from verifbfl.circuits.aggregation import weight_factors
from verifbfl.circuits.fixedpoint import FixedPointConfig, rescale_int
from verifbfl.errors import ShapeError
from verifbfl.fl.model import QuantizedModel


def fedavg(models, volumes, round: int = 0, owner: str = "") -> QuantizedModel:
    """sum_k round(f_k * w_k / 2^s) with f_k = round(n_k / n * 2^s).

    Rounding is per term, which makes the result identical to the running
    sum the aggregation circuit proves.
    """
    models = list(models)
    volumes = list(volumes)
    if not models:
        raise ValueError("fedavg of an empty model list")
    if len(models) != len(volumes):
        raise ValueError("one volume per model")
    first = models[0]
    for m in models[1:]:
        if m.dims != first.dims or m.cfg != first.cfg:
            raise ShapeError("models differ in architecture or fixed-point config")
    s = first.cfg.scale_bits
    factors = weight_factors(volumes, first.cfg)
    out = [0] * len(first.flat())
    for m, f in zip(models, factors):
        out = [a + rescale_int(f * v, s) for a, v in zip(out, m.flat())]
    return QuantizedModel.from_flat(first.dims, out, first.cfg, round=round, owner=owner)


def fedavg_vectors(vectors, volumes, s: int = 16) -> list:
    """Same rule on plain integer vectors (fixed point at scale s)."""
    vectors = [list(map(int, v)) for v in vectors]
    if not vectors:
        raise ValueError("fedavg of an empty list")
    d = len(vectors[0])
    if any(len(v) != d for v in vectors):
        raise ShapeError("vectors differ in dimension")
    factors = weight_factors(volumes, FixedPointConfig(s, max(s + 1, 32)))
    out = [0] * d
    for v, f in zip(vectors, factors):
        out = [a + rescale_int(f * x, s) for a, x in zip(out, v)]
    return out
