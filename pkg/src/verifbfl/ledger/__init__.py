from verifbfl.ledger.chain import Block, Chain, Receipt, replay
from verifbfl.ledger.machine import ESCROW, ORACLE, TRANSITIONS, Ledger, LedgerConfig, Status, TaskRecord
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
    decode_tx,
)

__all__ = [
    "Block", "Chain", "Receipt", "replay", "ESCROW", "ORACLE", "TRANSITIONS", "Ledger",
    "LedgerConfig", "Status", "TaskRecord", "AGGREGATOR", "TRAINER", "CreateTask",
    "DistributeRewards", "Event", "ResolveVerification", "SubmitGlobalModel", "SubmitLocalUpdate",
    "Subscribe", "decode_tx",
]
