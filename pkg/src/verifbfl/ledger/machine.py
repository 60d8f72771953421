"""Escrow, staking and task lifecycle as a deterministic state machine.

Every mutation goes through :meth:`Ledger.apply`, which either applies a
transaction completely or raises a :class:`LedgerError` and leaves the state
untouched: handlers validate everything before their first write.

Tokens live in three places: account balances, stake locks keyed
``(participant, task_id)`` and the per-task escrow pool, stored as the lock
``(ESCROW, task_id)``.  Their sum never changes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from verifbfl.errors import (
    AlreadyDistributed,
    AlreadySubmitted,
    AlreadySubscribed,
    BadTransaction,
    Forbidden,
    InsufficientFunds,
    NoSuchRequest,
    NoSuchTask,
    NotSubscribed,
    NotYourTurn,
    ReplayRejected,
    RewardTooLow,
    StakeTooLow,
    StaleRound,
    TaskExists,
    TaskStillRunning,
)
from verifbfl.ledger.encoding import encode_value, to_jsonable
from verifbfl.ledger.txs import (
    AGGREGATOR,
    TRAINER,
    CreateTask,
    DistributeRewards,
    Event,
    ResolveVerification,
    SubmitGlobalModel,
    SubmitLocalUpdate,
    Subscribe,
    Tx,
)

ESCROW = "__escrow__"
ORACLE = "oracle-net"


class Status(str, Enum):
    OPEN = "Open"
    TRAINING = "Training"
    AGGREGATING = "Aggregating"
    COMPLETED = "Completed"
    FAILED = "Failed"


TRANSITIONS = {
    Status.OPEN: {Status.TRAINING},
    Status.TRAINING: {Status.AGGREGATING},
    Status.AGGREGATING: {Status.TRAINING, Status.COMPLETED, Status.FAILED},
    Status.COMPLETED: set(),
    Status.FAILED: set(),
}
TERMINAL = {Status.COMPLETED, Status.FAILED}

PENDING, ACCEPTED, REJECTED = "Pending", "Accepted", "Rejected"


@dataclass(frozen=True)
class LedgerConfig:
    r_min: int = 1000
    k_min: int = 100
    compensation: int = 100
    trainer_share_percent: int = 80
    block_capacity: int = 256
    block_period: float = 1.0
    oracle_address: str = ORACLE

    def __post_init__(self):
        if min(self.r_min, self.k_min, self.compensation) < 0:
            raise ValueError("thresholds must be non-negative")
        if not 0 <= self.trainer_share_percent <= 100:
            raise ValueError("trainer share must be a percentage")
        if self.block_capacity < 1 or self.block_period <= 0:
            raise ValueError("block capacity and period must be positive")


@dataclass
class Submission:
    trainer: str
    round: int
    model_address: bytes
    proof_address: bytes
    z_n: int
    n: int
    volume: int
    request_id: int
    status: str = PENDING


@dataclass
class Request:
    request_id: int
    kind: str  # "accuracy" | "aggregation"
    task_id: bytes
    round: int
    submitter: str
    model_address: bytes
    proof_address: bytes


@dataclass
class TaskRecord:
    task_id: bytes
    publisher: str
    reward: int
    target_accuracy: Fraction
    n_trainers: int
    max_rounds: int
    initial_model: bytes
    status: Status = Status.OPEN
    round: int = 0
    trainers: list = field(default_factory=list)
    aggregators: list = field(default_factory=list)
    global_model: bytes = b""
    global_models: dict = field(default_factory=dict)  # round -> address
    submissions: dict = field(default_factory=dict)  # round -> {trainer: Submission}
    round_accuracy: dict = field(default_factory=dict)  # round -> Fraction
    contributions: dict = field(default_factory=dict)  # participant -> accepted count
    aggregation_request: int | None = None
    distributed: bool = False

    def live_trainers(self, blacklist) -> list:
        return [t for t in self.trainers if t not in blacklist]

    def canonical(self):
        subs = {
            r: {t: [s.round, s.model_address, s.proof_address, s.z_n, s.n, s.volume, s.request_id, s.status]
                for t, s in m.items()}
            for r, m in self.submissions.items()
        }
        return {
            "task_id": self.task_id, "publisher": self.publisher, "reward": self.reward,
            "target_accuracy": self.target_accuracy, "n_trainers": self.n_trainers,
            "max_rounds": self.max_rounds, "initial_model": self.initial_model,
            "status": self.status.value, "round": self.round, "trainers": list(self.trainers),
            "aggregators": list(self.aggregators), "global_model": self.global_model,
            "global_models": dict(self.global_models), "submissions": subs,
            "round_accuracy": dict(self.round_accuracy), "contributions": dict(self.contributions),
            "aggregation_request": self.aggregation_request, "distributed": self.distributed,
        }


class Ledger:
    def __init__(self, genesis: dict, config: LedgerConfig | None = None):
        self.config = config or LedgerConfig()
        for who, amount in genesis.items():
            if not isinstance(amount, int) or amount < 0:
                raise ValueError(f"bad genesis balance for {who!r}")
        self.genesis = dict(genesis)
        self.balances: dict = dict(genesis)
        self.locks: dict = {}
        self.blacklist: set = set()
        self.tasks: dict = {}
        self.requests: dict = {}
        self.next_request_id = 1
        self.accepted_models: dict = {}  # trainer -> set of accepted model addresses
        self.supply = sum(genesis.values())
        self.events: list = []

    # -- queries ----------------------------------------------------------

    def balance(self, who: str) -> int:
        return self.balances.get(who, 0)

    def locked(self, who: str, task_id: bytes) -> int:
        return self.locks.get((who, bytes(task_id)), 0)

    def pool(self, task_id: bytes) -> int:
        return self.locked(ESCROW, task_id)

    def task(self, task_id: bytes) -> TaskRecord:
        t = self.tasks.get(bytes(task_id))
        if t is None:
            raise NoSuchTask(f"unknown task {bytes(task_id).hex()[:16]}")
        return t

    def total_supply(self) -> int:
        return sum(self.balances.values()) + sum(self.locks.values())

    def starting_model(self, task_id: bytes, round: int) -> bytes:
        """Global model every trainer must start round ``round`` from."""
        t = self.task(task_id)
        if round <= 1:
            return t.initial_model
        return t.global_models[round - 1]

    def canonical(self):
        return {
            "balances": dict(self.balances),
            "locks": dict(self.locks),
            "blacklist": set(self.blacklist),
            "tasks": {k: t.canonical() for k, t in self.tasks.items()},
            "requests": {
                k: [r.kind, r.task_id, r.round, r.submitter, r.model_address, r.proof_address]
                for k, r in self.requests.items()
            },
            "next_request_id": self.next_request_id,
            "accepted_models": {k: set(v) for k, v in self.accepted_models.items()},
        }

    def state_bytes(self) -> bytes:
        return encode_value(self.canonical())

    def state_hash(self) -> bytes:
        return hashlib.sha256(self.state_bytes()).digest()

    def dump(self) -> dict:
        return to_jsonable(self.canonical())

    # -- transaction entry point -----------------------------------------

    def apply(self, tx: Tx) -> list:
        """Apply atomically; returns emitted events or raises LedgerError."""
        handler = _HANDLERS.get(type(tx))
        if handler is None:
            raise BadTransaction(f"unsupported transaction {type(tx).__name__}")
        _check_types(tx)
        events: list = []
        handler(self, tx, events)
        self.events.extend(events)
        return events

    # -- token movements ----------------------------------------------------

    def _debit(self, who, amount):
        if self.balances.get(who, 0) < amount:
            raise InsufficientFunds(f"{who} cannot cover {amount}")
        self.balances[who] = self.balances.get(who, 0) - amount

    def _credit(self, who, amount):
        if amount:
            self.balances[who] = self.balances.get(who, 0) + amount

    def _lock(self, key, amount):
        self.locks[key] = self.locks.get(key, 0) + amount

    def _unlock(self, key) -> int:
        return self.locks.pop(key, 0)

    def _set_status(self, t: TaskRecord, new: Status, events):
        if new not in TRANSITIONS[t.status]:
            raise AssertionError(f"illegal transition {t.status.value} -> {new.value}")
        events.append(Event("StatusChanged", {"task_id": t.task_id, "from": t.status.value, "to": new.value}))
        t.status = new

    def _slash(self, t: TaskRecord, who: str, events, reason: str):
        stake = self._unlock((who, t.task_id))
        self._lock((ESCROW, t.task_id), stake)
        self.blacklist.add(who)
        events.append(Event("Blacklisted", {"task_id": t.task_id, "who": who, "slashed": stake, "reason": reason}))

    def _new_request(self, kind, t, rnd, who, model, proof, events, claims) -> int:
        rid = self.next_request_id
        self.next_request_id += 1
        self.requests[rid] = Request(rid, kind, t.task_id, rnd, who, bytes(model), bytes(proof))
        events.append(Event("VerificationRequested", {
            "request_id": rid, "kind": kind, "task_id": t.task_id, "round": rnd, "submitter": who,
            "model_address": bytes(model), "proof_address": bytes(proof), **claims,
        }))
        return rid

    # -- operations -----------------------------------------------------------

    def _create_task(self, tx: CreateTask, events):
        cfg = self.config
        tid = bytes(tx.task_id)
        if tid in self.tasks:
            raise TaskExists("task already exists")
        if tx.reward < cfg.r_min:
            raise RewardTooLow(f"reward {tx.reward} below minimum {cfg.r_min}")
        if tx.n_trainers < 1 or tx.max_rounds < 1:
            raise BadTransaction("need at least one trainer and one round")
        if not 0 <= tx.target_accuracy <= 1:
            raise BadTransaction("target accuracy must lie in [0, 1]")
        if tx.sender in self.blacklist:
            raise Forbidden("publisher is blacklisted")
        self._debit(tx.sender, tx.reward)
        self._lock((ESCROW, tid), tx.reward)
        self.tasks[tid] = TaskRecord(tid, tx.sender, tx.reward, Fraction(tx.target_accuracy),
                                     tx.n_trainers, tx.max_rounds, bytes(tx.initial_model),
                                     global_model=bytes(tx.initial_model))
        events.append(Event("TaskSubmitted", {"task_id": tid, "publisher": tx.sender, "reward": tx.reward}))

    def _subscribe(self, tx: Subscribe, events):
        t = self.task(tx.task_id)
        who = tx.sender
        if who in self.blacklist:
            raise Forbidden(f"{who} is blacklisted")
        if tx.role not in (TRAINER, AGGREGATOR):
            raise BadTransaction(f"unknown role {tx.role!r}")
        if who == t.publisher:
            raise Forbidden("the publisher cannot work on its own task")
        if who in t.trainers or who in t.aggregators:
            raise AlreadySubscribed(f"{who} already participates in this task")
        if t.status in TERMINAL:
            raise StaleRound("task is finished")
        if tx.role == TRAINER and (t.status != Status.OPEN or len(t.trainers) >= t.n_trainers):
            raise StaleRound("trainer slots are closed")
        if tx.stake < self.config.k_min:
            raise StakeTooLow(f"stake {tx.stake} below minimum {self.config.k_min}")
        self._debit(who, tx.stake)
        self._lock((who, t.task_id), tx.stake)
        (t.trainers if tx.role == TRAINER else t.aggregators).append(who)
        events.append(Event("Subscribed", {"task_id": t.task_id, "who": who, "role": tx.role, "stake": tx.stake}))
        if t.status == Status.OPEN and len(t.trainers) == t.n_trainers and t.aggregators:
            self._set_status(t, Status.TRAINING, events)
            t.round = 1
            events.append(Event("RoundOpened", {"task_id": t.task_id, "round": 1, "global_model": t.global_model}))

    def _submit_local_update(self, tx: SubmitLocalUpdate, events):
        t = self.task(tx.task_id)
        who = tx.sender
        if who not in t.trainers:
            raise NotSubscribed(f"{who} is not a trainer of this task")
        if who in self.blacklist:
            raise Forbidden(f"{who} is blacklisted")
        if t.status != Status.TRAINING or tx.round != t.round:
            raise StaleRound(f"round {tx.round} is not open")
        subs = t.submissions.get(t.round, {})
        if who in subs:
            raise AlreadySubmitted(f"{who} already submitted in round {t.round}")
        if bytes(tx.model_address) in self.accepted_models.get(who, set()):
            raise ReplayRejected("model address was already submitted in an earlier round")
        if tx.n < 1 or not 0 <= tx.z_n <= tx.n or tx.volume < 1:
            raise BadTransaction("claimed counter, sample count or volume out of range")
        rid = self._new_request("accuracy", t, t.round, who, tx.model_address, tx.proof_address, events,
                                {"z_n": tx.z_n, "n": tx.n})
        sub = Submission(who, t.round, bytes(tx.model_address), bytes(tx.proof_address),
                         tx.z_n, tx.n, tx.volume, rid)
        t.submissions.setdefault(t.round, {})[who] = sub
        events.append(Event("LocalUpdateSubmitted", {"task_id": t.task_id, "round": t.round, "trainer": who,
                                                     "model_address": bytes(tx.model_address)}))

    def _resolve(self, tx: ResolveVerification, events):
        if tx.sender != self.config.oracle_address:
            raise Forbidden("only the oracle network resolves verification requests")
        req = self.requests.pop(tx.request_id, None)
        if req is None:
            raise NoSuchRequest(f"no pending request {tx.request_id}")
        t = self.task(req.task_id)
        events.append(Event("VerificationResolved", {"request_id": req.request_id, "valid": bool(tx.valid),
                                                     "reason": tx.reason}))
        if req.kind == "accuracy":
            sub = t.submissions[req.round][req.submitter]
            if tx.valid:
                sub.status = ACCEPTED
                self.accepted_models.setdefault(req.submitter, set()).add(sub.model_address)
                t.contributions[req.submitter] = t.contributions.get(req.submitter, 0) + 1
            else:
                sub.status = REJECTED
                self._slash(t, req.submitter, events, tx.reason or "invalid accuracy proof")
            self._maybe_close_training(t, events)
        else:
            t.aggregation_request = None
            if tx.valid:
                self._publish(t, req, events)
            else:
                self._slash(t, req.submitter, events, tx.reason or "invalid aggregation proof")
                t.aggregators = [a for a in t.aggregators if a != req.submitter]
                if t.aggregators:
                    events.append(Event("AggregatorPromoted", {"task_id": t.task_id, "who": t.aggregators[0]}))
                else:
                    self._set_status(t, Status.FAILED, events)

    def _maybe_close_training(self, t: TaskRecord, events):
        if t.status != Status.TRAINING:
            return
        live = t.live_trainers(self.blacklist)
        subs = t.submissions.get(t.round, {})
        if not live:
            # nobody left to train: close the round, then fail it
            self._set_status(t, Status.AGGREGATING, events)
            self._set_status(t, Status.FAILED, events)
            return
        if all(w in subs and subs[w].status == ACCEPTED for w in live):
            self._set_status(t, Status.AGGREGATING, events)

    def _submit_global_model(self, tx: SubmitGlobalModel, events):
        t = self.task(tx.task_id)
        who = tx.sender
        if who in self.blacklist:
            raise Forbidden(f"{who} is blacklisted")
        if who not in t.aggregators:
            raise NotSubscribed(f"{who} is not an aggregator of this task")
        if t.status != Status.AGGREGATING or tx.round != t.round:
            raise StaleRound(f"round {tx.round} is not aggregating")
        if t.aggregators[0] != who:
            raise NotYourTurn(f"{t.aggregators[0]} is the current aggregator")
        if t.aggregation_request is not None:
            raise AlreadySubmitted("an aggregation for this round is awaiting verification")
        t.aggregation_request = self._new_request("aggregation", t, t.round, who, tx.model_address,
                                                  tx.proof_address, events, {})

    def _publish(self, t: TaskRecord, req: Request, events):
        t.global_models[t.round] = req.model_address
        t.global_model = req.model_address
        t.contributions[req.submitter] = t.contributions.get(req.submitter, 0) + 1
        acc = self.round_accuracy(t, t.round)
        t.round_accuracy[t.round] = acc
        events.append(Event("GlobalModelPublished", {"task_id": t.task_id, "round": t.round,
                                                     "model_address": req.model_address, "accuracy": acc}))
        if acc >= t.target_accuracy:
            self._set_status(t, Status.COMPLETED, events)
        elif t.round >= t.max_rounds:
            self._set_status(t, Status.FAILED, events)
        else:
            self._set_status(t, Status.TRAINING, events)
            t.round += 1
            events.append(Event("RoundOpened", {"task_id": t.task_id, "round": t.round,
                                                "global_model": t.global_model}))

    def round_accuracy(self, t: TaskRecord, rnd: int) -> Fraction:
        """Pooled proof-verified accuracy of the round's accepted updates."""
        acc = [s for s in t.submissions.get(rnd, {}).values() if s.status == ACCEPTED]
        total = sum(s.n for s in acc)
        return Fraction(sum(s.z_n for s in acc), total) if total else Fraction(0)

    def accepted_updates(self, task_id: bytes, rnd: int) -> list:
        """Accepted submissions of a round in trainer subscription order."""
        t = self.task(task_id)
        subs = t.submissions.get(rnd, {})
        return [subs[w] for w in t.trainers if w in subs and subs[w].status == ACCEPTED]

    def _distribute(self, tx: DistributeRewards, events):
        t = self.task(tx.task_id)
        if t.status not in TERMINAL:
            raise TaskStillRunning("task has not finished")
        if t.distributed:
            raise AlreadyDistributed("rewards were already distributed")
        tid = t.task_id
        returned = {}
        for who in t.trainers + t.aggregators:
            stake = self._unlock((who, tid))
            if who in self.blacklist:
                # blacklisted elsewhere while still staked here: forfeit
                self._lock((ESCROW, tid), stake)
                continue
            self._credit(who, stake)
            returned[who] = stake
        pool = self._unlock((ESCROW, tid))
        payouts = {}
        if t.status == Status.FAILED:
            comp = min(self.config.compensation, pool)
            payouts[t.publisher] = comp
            pool -= comp
        trainer_units = {w: c for w, c in t.contributions.items() if w in t.trainers and w not in self.blacklist}
        agg_units = {w: c for w, c in t.contributions.items() if w in t.aggregators and w not in self.blacklist}
        trainer_pool = pool * self.config.trainer_share_percent // 100
        agg_pool = pool - trainer_pool
        leftover = 0
        for units, share in ((trainer_units, trainer_pool), (agg_units, agg_pool)):
            total = sum(units.values())
            if not total:
                leftover += share
                continue
            per = share // total
            for who in sorted(units):
                payouts[who] = payouts.get(who, 0) + per * units[who]
            leftover += share - per * total
        payouts[t.publisher] = payouts.get(t.publisher, 0) + leftover
        for who, amount in payouts.items():
            self._credit(who, amount)
        t.distributed = True
        events.append(Event("RewardsDistributed", {"task_id": tid, "stakes": returned,
                                                   "payouts": {k: v for k, v in payouts.items() if v}}))


def _check_types(tx: Tx):
    spec = {
        "sender": str, "task_id": (bytes, bytearray), "reward": int, "n_trainers": int,
        "max_rounds": int, "initial_model": (bytes, bytearray), "role": str, "stake": int,
        "round": int, "model_address": (bytes, bytearray), "proof_address": (bytes, bytearray),
        "z_n": int, "n": int, "volume": int, "request_id": int, "valid": bool, "reason": str,
        "target_accuracy": (Fraction, int),
    }
    for name, value in vars(tx).items():
        want = spec.get(name)
        if want is not None and not isinstance(value, want):
            raise BadTransaction(f"field {name} has type {type(value).__name__}")
        if want is int and (isinstance(value, bool) or value < 0):
            raise BadTransaction(f"field {name} must be a non-negative integer")


_HANDLERS = {
    CreateTask: Ledger._create_task,
    Subscribe: Ledger._subscribe,
    SubmitLocalUpdate: Ledger._submit_local_update,
    ResolveVerification: Ledger._resolve,
    SubmitGlobalModel: Ledger._submit_global_model,
    DistributeRewards: Ledger._distribute,
}
