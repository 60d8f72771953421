"""Participant strategies.  Each is a deterministic function of its inputs.

A trainer strategy returns a ``LocalUpdate`` (model, proof, claims); an
aggregator strategy returns a ``GlobalUpdate``.  The orchestrator stores the
objects and submits the transactions.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

from verifbfl.fl.dp import add_dp_noise
from verifbfl.fl.fedavg import fedavg
from verifbfl.fl.model import QuantizedModel, predict
from verifbfl.fl.train import evaluate_accuracy, local_train
from verifbfl.protocol import prove_accuracy, prove_aggregation


@dataclass
class TrainerView:
    """What a trainer sees at the start of its round."""

    desc: object
    task_id: bytes
    round: int
    name: str
    start_address: bytes
    start_model: QuantizedModel
    data: object
    epochs: int
    lr: float
    dp: object
    seed: int


@dataclass
class LocalUpdate:
    model: QuantizedModel
    proof: bytes
    z_n: int
    n: int
    volume: int
    reuse_start: bool = False  # submit the start model's address verbatim
    timings: dict = field(default_factory=dict)


@dataclass
class AggregatorView:
    desc: object
    task_id: bytes
    round: int
    name: str
    local_models: list
    volumes: list
    seed: int


@dataclass
class GlobalUpdate:
    model: QuantizedModel
    proof: bytes
    timings: dict = field(default_factory=dict)


def derive_seed(*parts) -> int:
    h = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _train(v: TrainerView, data) -> QuantizedModel:
    m = local_train(v.start_model, data, v.epochs, v.lr, seed=derive_seed(v.seed, v.name, v.round, "train"),
                    owner=v.name)
    if v.dp is not None:
        m = add_dp_noise(m, v.dp, derive_seed(v.seed, v.name, v.round, "dp"))
    return m.with_meta(round=v.round, owner=v.name)


def _prove(v: TrainerView, model, round=None, samples=None):
    t0 = time.perf_counter()
    proof = prove_accuracy(v.desc, v.task_id, v.round if round is None else round, v.name, v.start_address,
                           model, rng=derive_seed(v.seed, v.name, v.round, "prove"), samples=samples)
    return proof, time.perf_counter() - t0


def honest_trainer(v: TrainerView) -> LocalUpdate:
    model = _train(v, v.data)
    samples = v.desc.eval_samples(v.round)
    correct, n = evaluate_accuracy(model, samples)
    proof, dt = _prove(v, model)
    return LocalUpdate(model, proof.to_bytes(), correct, n, len(v.data), timings={"prove_accuracy": dt})


def poisoner(v: TrainerView) -> LocalUpdate:
    """Trains on flipped labels but proves honestly; proofs cannot catch it."""
    model = _train(v, v.data.label_flipped())
    correct, n = evaluate_accuracy(model, v.desc.eval_samples(v.round))
    proof, dt = _prove(v, model)
    return LocalUpdate(model, proof.to_bytes(), correct, n, len(v.data), timings={"prove_accuracy": dt})


def free_rider(v: TrainerView) -> LocalUpdate:
    """Resubmits the round's starting model with a proof made for the previous round."""
    stale_round = v.round - 1
    stale = v.desc.eval_samples(stale_round)
    correct, n = evaluate_accuracy(v.start_model, stale)
    proof, dt = _prove(v, v.start_model, round=stale_round)
    return LocalUpdate(v.start_model, proof.to_bytes(), correct, n, len(v.data), reuse_start=True,
                       timings={"prove_accuracy": dt})


def accuracy_forger(v: TrainerView) -> LocalUpdate:
    """Trains, then claims one more correct prediction than it has.

    A perfect model leaves no room above the true count, so the forger
    instead claims n over a proof whose eval set was rewritten to agree
    with its predictions.
    """
    model = _train(v, v.data)
    samples = v.desc.eval_samples(v.round)
    correct, n = evaluate_accuracy(model, samples)
    if correct < n:
        proof, dt = _prove(v, model)
        return LocalUpdate(model, proof.to_bytes(), correct + 1, n, len(v.data), timings={"prove_accuracy": dt})
    forged = []
    for k, (x, _) in enumerate(samples):
        x = list(x)
        if k == 0:
            x[0] += 1
        forged.append((x, predict(model, x)))
    proof, dt = _prove(v, model, samples=forged)
    return LocalUpdate(model, proof.to_bytes(), n, n, len(v.data), timings={"prove_accuracy": dt})


TRAINERS = {
    "honest": honest_trainer,
    "poisoner": poisoner,
    "free_rider": free_rider,
    "accuracy_forger": accuracy_forger,
}


def _prove_agg(v: AggregatorView, tamper=None):
    t0 = time.perf_counter()
    proof = prove_aggregation(v.desc, v.task_id, v.round, v.name, v.local_models, v.volumes,
                              rng=derive_seed(v.seed, v.name, v.round, "agg"), tamper=tamper)
    return proof, time.perf_counter() - t0


def honest_aggregator(v: AggregatorView) -> GlobalUpdate:
    model = fedavg(v.local_models, v.volumes, round=v.round, owner=v.name)
    proof, dt = _prove_agg(v)
    return GlobalUpdate(model, proof.to_bytes(), timings={"prove_aggregation": dt})


def lazy_aggregator(v: AggregatorView) -> GlobalUpdate:
    """Skips the averaging: publishes the first local model as the global one and
    forges the proof by feeding that model in place of every input."""
    first = v.local_models[0]
    model = first.with_meta(round=v.round, owner=v.name)

    def tamper(wits):
        return [(acc, first.flat(), f) for acc, _, f in wits]

    proof, dt = _prove_agg(v, tamper)
    return GlobalUpdate(model, proof.to_bytes(), timings={"prove_aggregation": dt})


AGGREGATORS = {
    "honest": honest_aggregator,
    "lazy_aggregator": lazy_aggregator,
}
