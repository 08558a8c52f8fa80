"""Signed, content-addressed blocks and transactions."""

from .codec import DecodeError
from .crypto import ZERO_HASH, Hash32, Identity, NodeId
from .files import (
    GenesisConfig,
    decode_snapshot,
    deterministic_roster,
    encode_snapshot,
    read_snapshot,
    write_snapshot,
)
from .model import (
    GENESIS_KINDS,
    TRANSITION_KINDS,
    BadLink,
    BadSignature,
    Block,
    BlockKind,
    Chain,
    ChainError,
    MalformedBlock,
    PadTooSmall,
    Signature,
    Transaction,
    TransactionKind,
    append_block,
    build_block,
    hash_block,
    link_hash,
    make_transaction,
    new_chain,
)
from .validate import Finding, ValidationReport, validate_chain

__all__ = [
    "BadLink",
    "BadSignature",
    "Block",
    "BlockKind",
    "Chain",
    "ChainError",
    "DecodeError",
    "Finding",
    "GENESIS_KINDS",
    "GenesisConfig",
    "Hash32",
    "Identity",
    "MalformedBlock",
    "NodeId",
    "PadTooSmall",
    "Signature",
    "TRANSITION_KINDS",
    "Transaction",
    "TransactionKind",
    "ValidationReport",
    "ZERO_HASH",
    "append_block",
    "build_block",
    "decode_snapshot",
    "deterministic_roster",
    "encode_snapshot",
    "hash_block",
    "link_hash",
    "make_transaction",
    "new_chain",
    "read_snapshot",
    "validate_chain",
    "write_snapshot",
]
