"""Single-log block scheduler standing in for the consensus layer.

Transactions queue in arrival order; every ``block_period`` seconds of the
supplied clock one block takes at most ``block_capacity`` of them and applies
them in order.  Failed transactions stay in the block with their error code.
A transaction's completion time is its block's timestamp.
"""
from __future__ import annotations

import collections
import hashlib
import threading
from dataclasses import dataclass, field

from verifbfl.errors import LedgerError
from verifbfl.ledger.machine import Ledger, LedgerConfig
from verifbfl.ledger.txs import Tx, decode_tx


@dataclass
class Receipt:
    tx: Tx
    submitted_at: float
    completed_at: float
    height: int
    ok: bool
    error: str = ""
    events: list = field(default_factory=list)

    @property
    def latency(self) -> float:
        return self.completed_at - self.submitted_at


@dataclass
class Block:
    height: int
    timestamp: float
    parent: bytes
    receipts: list
    state_hash: bytes

    @property
    def block_hash(self) -> bytes:
        h = hashlib.sha256()
        h.update(self.height.to_bytes(8, "little"))
        h.update(repr(self.timestamp).encode())
        h.update(self.parent)
        for r in self.receipts:
            h.update(r.tx.tx_hash)
            h.update(b"\x01" if r.ok else b"\x00")
        h.update(self.state_hash)
        return h.digest()

    @property
    def events(self) -> list:
        return [e for r in self.receipts for e in r.events]


class Chain:
    def __init__(self, genesis: dict, config: LedgerConfig | None = None, listeners=(),
                 hash_state: bool = True):
        self.ledger = Ledger(genesis, config)
        self.hash_state = hash_state
        self.config = self.ledger.config
        self.blocks: list = []
        self._queue = collections.deque()
        self._lock = threading.Lock()
        self.listeners = list(listeners)
        self.supply_history: list = []

    @property
    def height(self) -> int:
        return len(self.blocks)

    def submit(self, tx: Tx, now: float) -> None:
        """Thread-safe enqueue; ``now`` is the submission timestamp."""
        with self._lock:
            self._queue.append((tx, now))

    def pending(self) -> int:
        with self._lock:
            return len(self._queue)

    def produce_block(self, now: float) -> Block:
        with self._lock:
            n = min(self.config.block_capacity, len(self._queue))
            batch = [self._queue.popleft() for _ in range(n)]
        receipts = []
        for tx, sub in batch:
            try:
                events = self.ledger.apply(tx)
                receipts.append(Receipt(tx, sub, now, self.height + 1, True, events=events))
            except LedgerError as exc:
                receipts.append(Receipt(tx, sub, now, self.height + 1, False, error=exc.code))
        parent = self.blocks[-1].block_hash if self.blocks else b"\x00" * 32
        state_hash = self.ledger.state_hash() if self.hash_state else b""
        block = Block(self.height + 1, now, parent, receipts, state_hash)
        self.blocks.append(block)
        self.supply_history.append(self.ledger.total_supply())
        for listener in self.listeners:
            listener(block, self)
        return block

    def tx_log(self) -> list:
        return [r.tx for b in self.blocks for r in b.receipts]

    def encoded_log(self) -> list:
        return [tx.encode() for tx in self.tx_log()]


def replay(genesis: dict, txs, config: LedgerConfig | None = None) -> Ledger:
    """Fold a transaction log (objects or encodings) over the genesis state."""
    ledger = Ledger(genesis, config)
    for tx in txs:
        if isinstance(tx, (bytes, bytearray)):
            tx = decode_tx(tx)
        try:
            ledger.apply(tx)
        except LedgerError:
            pass
    return ledger
