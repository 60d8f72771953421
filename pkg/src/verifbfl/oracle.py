"""Simulated oracle network: independent verifier nodes and a >2/3 quorum.

The network listens to committed blocks.  For every VerificationRequested
event it snapshots what the request needs from ledger state, asks every node
for a verdict, and posts the quorum result back as a ResolveVerification
transaction, which lands in a later block.
"""
from __future__ import annotations

import hashlib
import logging
import random
from collections import Counter
from dataclasses import dataclass, field

from verifbfl.errors import DecodeError, NotFound, VerifBFLError
from verifbfl.fl.model import QuantizedModel
from verifbfl.ivc import IvcProof, verify
from verifbfl.ledger.encoding import decode_value, encode_value
from verifbfl.ledger.txs import ResolveVerification
from verifbfl.protocol import (
    TaskDescription,
    accuracy_keys,
    accuracy_statement,
    aggregation_keys,
    aggregation_statement,
)

log = logging.getLogger(__name__)

HONEST = "honest"
ALWAYS_ACCEPT = "always-accept"
ALWAYS_REJECT = "always-reject"
RANDOM = "random"
SILENT = "silent"
BEHAVIORS = (HONEST, ALWAYS_ACCEPT, ALWAYS_REJECT, RANDOM, SILENT)

FETCH_FAILED = "FetchFailed"


@dataclass(frozen=True)
class VerificationRequest:
    request_id: int
    kind: str
    task_id: bytes
    round: int
    submitter: str
    model_address: bytes
    proof_address: bytes
    z_n: int = 0
    n: int = 0
    start_model: bytes = b""
    updates: tuple = ()  # ((model_address, volume), ...) for aggregation

    def encode(self) -> bytes:
        return encode_value([
            "VerificationRequest", self.request_id, self.kind, self.task_id, self.round, self.submitter,
            self.model_address, self.proof_address, self.z_n, self.n, self.start_model,
            [list(u) for u in self.updates],
        ])

    @classmethod
    def decode(cls, data: bytes) -> "VerificationRequest":
        v = decode_value(data)
        if not (isinstance(v, list) and len(v) == 12 and v[0] == "VerificationRequest"):
            raise DecodeError("malformed verification request")
        return cls(*v[1:11], tuple(tuple(u) for u in v[11]))

    def addresses(self) -> list:
        out = [self.task_id, self.model_address, self.proof_address]
        out.extend(a for a, _ in self.updates)
        return out


@dataclass(frozen=True)
class Report:
    request_id: int
    node_id: str
    verdict: bool | None  # None: no report before the timeout
    reason: str = ""

    def encode(self) -> bytes:
        return encode_value(["Report", self.request_id, self.node_id, self.verdict, self.reason])


def request_from_event(event, ledger) -> VerificationRequest:
    d = event.data
    kind = d["kind"]
    updates = ()
    start = b""
    if kind == "aggregation":
        updates = tuple((s.model_address, s.volume) for s in ledger.accepted_updates(d["task_id"], d["round"]))
    else:
        start = ledger.starting_model(d["task_id"], d["round"])
    return VerificationRequest(d["request_id"], kind, d["task_id"], d["round"], d["submitter"],
                               d["model_address"], d["proof_address"], d.get("z_n", 0), d.get("n", 0),
                               start, updates)


def check_request(req: VerificationRequest, store) -> tuple:
    """Honest verification: rebuild the statement, decode and verify. ``(ok, reason)``."""
    try:
        desc = TaskDescription.decode(store.get(req.task_id))
        proof_bytes = store.get(req.proof_address)
        model, p = QuantizedModel.from_bytes(store.get(req.model_address))
    except NotFound:
        return False, FETCH_FAILED
    except DecodeError as exc:
        return False, f"BadObject: {exc}"
    if p != desc.p or model.dims != tuple(desc.dims) or model.cfg != desc.cfg:
        return False, "ModelMismatch"
    try:
        proof = IvcProof.from_bytes(proof_bytes)
    except DecodeError:
        return False, "MalformedProof"
    try:
        if req.kind == "accuracy":
            if req.n != desc.n_eval:
                return False, "WrongEvalSize"
            _, vk, _ = accuracy_keys(desc)
            i, z0, z_n = accuracy_statement(desc, req.task_id, req.round, req.submitter, req.start_model,
                                            model, req.z_n)
        elif req.kind == "aggregation":
            if not req.updates:
                return False, "NothingToAggregate"
            locals_ = []
            for addr, _ in req.updates:
                m, lp = QuantizedModel.from_bytes(store.get(addr))
                if lp != p or m.dims != model.dims:
                    return False, "ModelMismatch"
                locals_.append(m)
            _, vk, _ = aggregation_keys(desc)
            i, z0, z_n = aggregation_statement(desc, req.task_id, req.round, req.submitter, locals_,
                                               [v for _, v in req.updates], model)
        else:
            return False, "UnknownKind"
    except NotFound:
        return False, FETCH_FAILED
    except (DecodeError, VerifBFLError) as exc:
        return False, f"BadObject: {exc}"
    if not verify(vk, i, z0, z_n, proof):
        return False, "InvalidProof"
    return True, "ok"


class OracleNode:
    def __init__(self, node_id: str, behavior: str = HONEST, seed: int = 0):
        if behavior not in BEHAVIORS:
            raise ValueError(f"unknown oracle behavior {behavior!r}")
        self.node_id = node_id
        self.behavior = behavior
        self.seed = seed

    def __repr__(self):
        return f"OracleNode({self.node_id!r}, {self.behavior!r})"

    def report(self, req: VerificationRequest, store) -> Report:
        b = self.behavior
        if b == HONEST:
            ok, reason = check_request(req, store)
            return Report(req.request_id, self.node_id, ok, reason)
        if b == ALWAYS_ACCEPT:
            return Report(req.request_id, self.node_id, True, "ok")
        if b == ALWAYS_REJECT:
            return Report(req.request_id, self.node_id, False, "rejected")
        if b == RANDOM:
            h = hashlib.sha256(f"{self.seed}/{self.node_id}/{req.request_id}".encode()).digest()
            return Report(req.request_id, self.node_id, bool(random.Random(h).getrandbits(1)), "random")
        return Report(req.request_id, self.node_id, None, "timeout")


def quorum_resolve(reports, n: int) -> bool:
    """Valid iff strictly more than 2n/3 nodes reported true; missing counts as false."""
    yes = sum(1 for r in reports if (r.verdict if isinstance(r, Report) else r) is True)
    return 3 * yes > 2 * n


@dataclass
class Resolution:
    request: VerificationRequest
    valid: bool
    reason: str
    reports: list = field(default_factory=list)


class OracleNetwork:
    def __init__(self, nodes, store, address: str = "oracle-net"):
        if not nodes:
            raise ValueError("an oracle network needs at least one node")
        self.nodes = list(nodes)
        self.store = store
        self.address = address
        self.resolutions: dict = {}

    @property
    def size(self) -> int:
        return len(self.nodes)

    def dispatch(self, req: VerificationRequest) -> Resolution:
        if req.request_id in self.resolutions:
            raise ValueError(f"request {req.request_id} was already dispatched")
        if any(a not in self.store for a in req.addresses()):
            res = Resolution(req, False, FETCH_FAILED, [])
        else:
            reports = [node.report(req, self.store) for node in self.nodes]
            valid = quorum_resolve(reports, self.size)
            res = Resolution(req, valid, "ok" if valid else _reason(reports), reports)
        self.resolutions[req.request_id] = res
        log.info("request %d (%s by %s): %s %s", req.request_id, req.kind, req.submitter,
                 "valid" if res.valid else "invalid", res.reason)
        return res

    def on_block(self, block, chain) -> None:
        """Chain listener: answer each new request with a callback transaction."""
        for event in block.events:
            if event.name != "VerificationRequested":
                continue
            res = self.dispatch(request_from_event(event, chain.ledger))
            chain.submit(ResolveVerification(self.address, res.request.request_id, res.valid, res.reason),
                         block.timestamp)

    def attach(self, chain) -> "OracleNetwork":
        chain.listeners.append(self.on_block)
        return self


def _reason(reports) -> str:
    reasons = Counter(r.reason for r in reports if r.verdict is not True)
    return reasons.most_common(1)[0][0] if reasons else "NoQuorum"


def make_network(behaviors, store, seed: int = 0, address: str = "oracle-net") -> OracleNetwork:
    nodes = [OracleNode(f"node-{i}", b, seed) for i, b in enumerate(behaviors)]
    return OracleNetwork(nodes, store, address)
