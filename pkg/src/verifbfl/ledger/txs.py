"""Ledger transactions and events with canonical encodings."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

from verifbfl.errors import DecodeError
from verifbfl.ledger.encoding import decode_value, encode_value, to_jsonable

TRAINER = "trainer"
AGGREGATOR = "aggregator"

_TX_TYPES: dict = {}


def _register(cls):
    _TX_TYPES[cls.__name__] = cls
    return cls


class Tx:
    sender: str

    def to_dict(self) -> dict:
        return asdict(self)

    def encode(self) -> bytes:
        return encode_value([type(self).__name__, self.to_dict()])

    @property
    def tx_hash(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    def to_json(self) -> dict:
        return {"type": type(self).__name__, **to_jsonable(self.to_dict())}


def decode_tx(data: bytes) -> Tx:
    v = decode_value(data)
    if not (isinstance(v, list) and len(v) == 2 and isinstance(v[1], dict)):
        raise DecodeError("malformed transaction")
    cls = _TX_TYPES.get(v[0])
    if cls is None:
        raise DecodeError(f"unknown transaction type {v[0]!r}")
    names = {f.name for f in fields(cls)}
    if set(v[1]) != names:
        raise DecodeError("transaction fields do not match its type")
    tx = cls(**v[1])
    if tx.encode() != bytes(data):
        raise DecodeError("non-canonical transaction encoding")
    return tx


@_register
@dataclass(frozen=True)
class CreateTask(Tx):
    sender: str
    task_id: bytes
    reward: int
    target_accuracy: Fraction
    n_trainers: int
    max_rounds: int
    initial_model: bytes


@_register
@dataclass(frozen=True)
class Subscribe(Tx):
    sender: str
    task_id: bytes
    role: str
    stake: int


@_register
@dataclass(frozen=True)
class SubmitLocalUpdate(Tx):
    sender: str
    task_id: bytes
    round: int
    model_address: bytes
    proof_address: bytes
    z_n: int
    n: int
    volume: int


@_register
@dataclass(frozen=True)
class SubmitGlobalModel(Tx):
    sender: str
    task_id: bytes
    round: int
    model_address: bytes
    proof_address: bytes


@_register
@dataclass(frozen=True)
class ResolveVerification(Tx):
    sender: str
    request_id: int
    valid: bool
    reason: str = ""


@_register
@dataclass(frozen=True)
class DistributeRewards(Tx):
    sender: str
    task_id: bytes


@dataclass(frozen=True)
class Event:
    name: str
    data: dict = field(default_factory=dict)

    def encode(self) -> bytes:
        return encode_value([self.name, self.data])

    def to_json(self) -> dict:
        return {"event": self.name, **to_jsonable(self.data)}
