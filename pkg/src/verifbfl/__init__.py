"""Verifiable blockchained federated learning: folding-based IVC proofs of
accuracy and aggregation, a staking ledger, and a simulated oracle quorum."""

__version__ = "0.1.0"
