"""Proof-of-Turn consensus toolkit: chain, turn state machine, peering,
game contracts, storage compaction and a deterministic simulator."""

__version__ = "0.1.0"
