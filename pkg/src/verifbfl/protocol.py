"""Public statements shared by provers and oracle nodes.

A task description object (stored in the content store; its address is the
task id) fixes the architecture, fixed-point config, security level and the
eval-set recipe.  From it and ledger state anyone can rebuild the claimed
``(i, z0, z_n)`` of an accuracy or aggregation proof; nothing self-reported
except the counter ``z_n`` enters a statement.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

from verifbfl.algebra.group import group_for_level
from verifbfl.circuits.aggregation import (
    AggregationStepSpec,
    aggregation_witnesses,
    build_aggregation_step,
    inputs_chain,
    weight_factors,
    zero_sum_digest,
)
from verifbfl.circuits.fixedpoint import FixedPointConfig
from verifbfl.circuits.inference import InferenceStepSpec, build_inference_step, context_digest, sample_chain
from verifbfl.errors import DecodeError
from verifbfl.fl.dataset import gaussian_blobs
from verifbfl.fl.model import QuantizedModel, num_params
from verifbfl.ivc import IvcState, finalize, keygen, prove_step, setup
from verifbfl.ledger.encoding import decode_value, encode_value


@dataclass(frozen=True)
class TaskDescription:
    dims: tuple
    level: str = "test"
    scale_bits: int = 16
    value_bits: int = 32
    centers_seed: int = 0
    eval_seed: int = 0
    n_eval: int = 100
    separation: float = 3.0
    label: str = ""

    @property
    def cfg(self) -> FixedPointConfig:
        return FixedPointConfig(self.scale_bits, self.value_bits)

    @property
    def group(self):
        return group_for_level(self.level)

    @property
    def p(self) -> int:
        return self.group.order

    def encode(self) -> bytes:
        return encode_value({
            "kind": "verifbfl-task/v1", "dims": list(self.dims), "level": self.level,
            "scale_bits": self.scale_bits, "value_bits": self.value_bits,
            "centers_seed": self.centers_seed, "eval_seed": self.eval_seed, "n_eval": self.n_eval,
            "separation_milli": round(self.separation * 1000), "label": self.label,
        })

    @classmethod
    def decode(cls, data: bytes) -> "TaskDescription":
        v = decode_value(data)
        try:
            if v["kind"] != "verifbfl-task/v1":
                raise DecodeError("not a task description")
            return cls(tuple(v["dims"]), v["level"], v["scale_bits"], v["value_bits"], v["centers_seed"],
                       v["eval_seed"], v["n_eval"], v["separation_milli"] / 1000, v["label"])
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed task description: {exc}") from exc

    def eval_samples(self, round: int):
        """Public eval set for a round, as quantized (features, label) pairs."""
        seed = int.from_bytes(hashlib.sha256(b"eval" + self.eval_seed.to_bytes(8, "little")
                                             + round.to_bytes(4, "little")).digest()[:8], "little")
        ds = gaussian_blobs(self.n_eval, self.dims[0], self.dims[-1], seed=seed,
                            centers_seed=self.centers_seed, separation=self.separation)
        return ds.quantized(self.cfg)


# ---------------------------------------------------------------------------
# keys (cached: shapes are deterministic and expensive to synthesize)
# ---------------------------------------------------------------------------

_KEYS: dict = {}
_KEYS_LOCK = threading.Lock()


def accuracy_keys(desc: TaskDescription):
    """(pk, vk, circuit) for the accuracy step of this architecture."""
    key = ("accuracy", tuple(desc.dims), desc.level, desc.scale_bits, desc.value_bits)
    with _KEYS_LOCK:
        if key not in _KEYS:
            shape, circuit = build_inference_step(InferenceStepSpec(tuple(desc.dims), desc.cfg), desc.p)
            pk, vk = keygen(setup(desc.level, shape), shape)
            _KEYS[key] = (pk, vk, circuit)
        return _KEYS[key]


def aggregation_keys(desc: TaskDescription):
    dim = num_params(desc.dims)
    key = ("aggregation", dim, desc.level, desc.scale_bits, desc.value_bits)
    with _KEYS_LOCK:
        if key not in _KEYS:
            shape, circuit = build_aggregation_step(AggregationStepSpec(dim, 1, desc.cfg), desc.p)
            pk, vk = keygen(setup(desc.level, shape), shape)
            _KEYS[key] = (pk, vk, circuit)
        return _KEYS[key]


# ---------------------------------------------------------------------------
# statements
# ---------------------------------------------------------------------------


def accuracy_context(p: int, task_id: bytes, round: int, trainer: str, start_model: bytes) -> int:
    return context_digest(p, b"accuracy", bytes(task_id), round, trainer, bytes(start_model))


def accuracy_statement(desc: TaskDescription, task_id: bytes, round: int, trainer: str,
                       start_model: bytes, model: QuantizedModel, claimed_correct: int):
    """(i, z0, z_n) an honest accuracy proof must match."""
    p = desc.p
    ctx = accuracy_context(p, task_id, round, trainer, start_model)
    digest = model.digest(p)
    samples = desc.eval_samples(round)
    z0 = [0, digest, ctx, ctx]
    z_n = [claimed_correct % p, digest, ctx, sample_chain(p, ctx, samples)]
    return len(samples), z0, z_n


def aggregation_context(p: int, task_id: bytes, round: int, aggregator: str) -> int:
    return context_digest(p, b"aggregation", bytes(task_id), round, aggregator)


def aggregation_statement(desc: TaskDescription, task_id: bytes, round: int, aggregator: str,
                          local_models, volumes, global_model: QuantizedModel):
    p = desc.p
    ctx = aggregation_context(p, task_id, round, aggregator)
    factors = weight_factors(volumes, desc.cfg)
    dim = len(global_model.flat())
    z0 = [1, zero_sum_digest(p, dim), ctx, ctx]
    chain = inputs_chain(p, ctx, [(m.digest(p), f) for m, f in zip(local_models, factors)])
    z_n = [1, global_model.digest(p), chain, ctx]
    return len(local_models), z0, z_n


# ---------------------------------------------------------------------------
# provers
# ---------------------------------------------------------------------------


def prove_accuracy(desc: TaskDescription, task_id: bytes, round: int, trainer: str, start_model: bytes,
                   model: QuantizedModel, rng=None, samples=None):
    """Runs the accuracy IVC over the round's eval set; returns the proof."""
    pk, _, circuit = accuracy_keys(desc)
    p = desc.p
    ctx = accuracy_context(p, task_id, round, trainer, start_model)
    state = IvcState.start(pk, circuit, [0, model.digest(p), ctx, ctx], rng)
    flat = model.flat()
    for features, label in samples if samples is not None else desc.eval_samples(round):
        prove_step(state, circuit, (flat, features, label))
    return finalize(state, pk)


def prove_aggregation(desc: TaskDescription, task_id: bytes, round: int, aggregator: str, local_models,
                      volumes, rng=None, tamper=None):
    """Proves the weighted sum; ``tamper`` may rewrite the per-step witnesses
    (used by adversarial aggregators, with checks disabled)."""
    pk, _, circuit = aggregation_keys(desc)
    p = desc.p
    factors = weight_factors(volumes, desc.cfg)
    dim = len(local_models[0].flat())
    ctx = aggregation_context(p, task_id, round, aggregator)
    state = IvcState.start(pk, circuit, [1, zero_sum_digest(p, dim), ctx, ctx], rng)
    wits = list(aggregation_witnesses([m.flat() for m in local_models], factors, desc.cfg.scale_bits))
    check = tamper is None
    if tamper is not None:
        wits = tamper(wits)
    for w in wits:
        prove_step(state, circuit, w, check=check)
    return finalize(state, pk)
