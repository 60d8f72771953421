"""Step circuit for the proof of aggregation: one weighted local model per step.

Public state ``z = [valid, sum_digest, inputs_chain, context]``:

* ``valid`` must be 1 on entry and stays 1;
* ``sum_digest`` is the model digest of the running weighted sum, so after
  the last step it equals the digest of the published global model;
* ``inputs_chain`` absorbs (local model digest, weight factor) per step and
  pins which ledger-accepted updates were aggregated;
* ``context`` binds task, round and aggregator and is carried unchanged.

The step witness is ``(running_sum, local_weights, factor)``.  Each local
coordinate contributes ``round(factor * w / 2^s)`` (round half up), which is
exactly what :func:`verifbfl.fl.fedavg.fedavg` computes in plaintext.
"""
from __future__ import annotations

from dataclasses import dataclass

from verifbfl.circuits.fixedpoint import FixedPointConfig, rescale_int
from verifbfl.circuits.gadgets import range_check, rescale
from verifbfl.circuits.sponge import DOMAIN_CHAIN, DOMAIN_MODEL, hash_elements, hash_gadget
from verifbfl.errors import ShapeError
from verifbfl.ivc import StepCircuit, build_shape

VALID, SUM, INPUTS, CONTEXT = range(4)


@dataclass(frozen=True)
class AggregationStepSpec:
    dim: int
    num_clients: int = 1
    cfg: FixedPointConfig = FixedPointConfig()

    def __post_init__(self):
        if self.dim < 1 or self.num_clients < 1:
            raise ShapeError("dimension and client count must be positive")


def weight_factors(volumes, cfg: FixedPointConfig) -> list:
    """round(n_k / n * 2^s) for each client, half up, integer-exact."""
    vols = [int(v) for v in volumes]
    if not vols or min(vols) <= 0:
        raise ValueError("volumes must be positive")
    n = sum(vols)
    one = cfg.one
    return [(2 * v * one + n) // (2 * n) for v in vols]


class AggregationStep(StepCircuit):
    arity = 4

    def __init__(self, spec: AggregationStepSpec, p: int):
        spec.cfg.check_field(p, 1)
        self.spec = spec
        self.p = p

    def dummy_witness(self):
        d = self.spec.dim
        return [0] * d, [0] * d, 0

    def synthesize(self, cs, z_in, witness):
        spec = self.spec
        s = spec.cfg.scale_bits
        b = spec.cfg.value_bits
        running, local, factor = witness
        if len(running) != spec.dim or len(local) != spec.dim:
            raise ShapeError(f"aggregation step expects dimension {spec.dim}")

        cs.enforce_equal(z_in[VALID], cs.one())
        acc = [cs.alloc(v) for v in running]
        cs.enforce_equal(hash_gadget(cs, acc, DOMAIN_MODEL), z_in[SUM])

        w = [cs.alloc(v) for v in local]
        local_digest = hash_gadget(cs, w, DOMAIN_MODEL)
        f = cs.alloc(factor)
        range_check(cs, f, s + 1)

        out = []
        for a, wj in zip(acc, w):
            q, _ = rescale(cs, cs.mul(f, wj), s, b)
            out.append(a + q)
        sum_out = hash_gadget(cs, out, DOMAIN_MODEL)
        chain_out = hash_gadget(cs, [z_in[INPUTS], local_digest, f], DOMAIN_CHAIN)
        return [z_in[VALID], sum_out, chain_out, z_in[CONTEXT]]

    def step(self, z, witness):
        p = self.p
        running, local, factor = witness
        s = self.spec.cfg.scale_bits
        out = [int(a) + rescale_int(int(factor) * int(v), s) for a, v in zip(running, local)]
        local_digest = hash_elements(p, [v % p for v in local], DOMAIN_MODEL)
        return [
            z[VALID],
            hash_elements(p, [v % p for v in out], DOMAIN_MODEL),
            inputs_chain_step(p, z[INPUTS], local_digest, factor),
            z[CONTEXT],
        ]


def inputs_chain_step(p: int, chain: int, local_digest: int, factor: int) -> int:
    return hash_elements(p, [chain, local_digest, factor], DOMAIN_CHAIN)


def inputs_chain(p: int, start: int, digests_and_factors) -> int:
    h = start
    for d, f in digests_and_factors:
        h = inputs_chain_step(p, h, d, f)
    return h


def zero_sum_digest(p: int, dim: int) -> int:
    return hash_elements(p, [0] * dim, DOMAIN_MODEL)


def aggregation_witnesses(local_flats, factors, s: int):
    """Yields the per-step witnesses with the running sum threaded through."""
    running = [0] * len(local_flats[0])
    for flat, f in zip(local_flats, factors):
        yield list(running), list(flat), f
        running = [a + rescale_int(f * int(v), s) for a, v in zip(running, flat)]


def build_aggregation_step(spec: AggregationStepSpec, p: int):
    circuit = AggregationStep(spec, p)
    return build_shape(circuit, p), circuit
