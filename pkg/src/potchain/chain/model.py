"""Transactions, blocks and the immutable chain value."""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from typing import Iterable, Iterator

from .codec import Reader, i64, lp, lp_str, u64
from .crypto import Hash32, Identity, NodeId


class ChainError(Exception):
    """Base class for chain-core failures."""


class BadLink(ChainError):
    pass


class BadSignature(ChainError):
    pass


class MalformedBlock(ChainError):
    pass


class PadTooSmall(ChainError):
    pass


class TransactionKind(IntEnum):
    PAYLOAD = 0
    HIDDEN_ENCRYPTED = 1
    HIDDEN_GAME_HASH = 2
    BLOAT = 3
    REVEAL_KEY = 4
    REVEAL_PREIMAGE = 5
    RANDOM_CALL = 6
    RANDOM_COMMIT = 7
    RANDOM_REVEAL = 8
    VOTE_CALL = 9
    VOTE_BALLOT = 10
    DISPUTE = 11
    TRIGGER_CLAIM = 12
    JOIN_PROPOSAL = 13
    LEAVE_NOTICE = 14
    DRAW_CLAIM = 15
    FOG_REPORT = 16


class BlockKind(IntEnum):
    GENESIS = 0
    DATA = 1
    HANDOVER = 2
    FINALIZING = 3
    META_STATE_GENESIS = 4


GENESIS_KINDS = frozenset({BlockKind.GENESIS, BlockKind.META_STATE_GENESIS})
TRANSITION_KINDS = frozenset({BlockKind.HANDOVER, BlockKind.FINALIZING})


def _encode_node(node: NodeId) -> bytes:
    return lp(node.public_key) + lp_str(node.label)


def _decode_node(r: Reader) -> NodeId:
    key = r.lp()
    return NodeId(key, r.lp_str())


@dataclass(frozen=True)
class Transaction:
    """A signed chain element. ``id`` and ``declared_size`` derive from the body."""

    author: NodeId
    kind: TransactionKind
    body: bytes
    signature: bytes

    @cached_property
    def id(self) -> Hash32:
        return transaction_id(self.author, self.kind, self.body)

    @property
    def declared_size(self) -> int:
        return len(self.body)

    def signing_message(self) -> bytes:
        return _tx_message(self.id, self.kind, self.body)

    def verify(self) -> bool:
        return self.author.verify(self.signature, self.signing_message())

    def encode(self) -> bytes:
        return _encode_node(self.author) + u64(int(self.kind)) + lp(self.body) + lp(self.signature)

    @classmethod
    def decode(cls, r: Reader) -> "Transaction":
        author = _decode_node(r)
        kind = TransactionKind(r.u64())
        body = r.lp()
        return cls(author, kind, body, r.lp())


def transaction_id(author: NodeId, kind: TransactionKind, body: bytes) -> Hash32:
    return Hash32.of(lp(author.public_key), u64(int(kind)), lp(body))


def _tx_message(tx_id: bytes, kind: TransactionKind, body: bytes) -> bytes:
    return b"tx" + tx_id + u64(int(kind)) + lp(body)


def make_transaction(
    author: Identity,
    kind: TransactionKind,
    body: bytes,
    pad_to: int | None = None,
    rng: random.Random | None = None,
) -> Transaction:
    """Sign a transaction, optionally padding the body with random filler.

    Body schemas are self-delimiting, so trailing filler never changes meaning.
    Pass ``rng`` for reproducible filler.
    """
    if pad_to is not None:
        if len(body) > pad_to:
            raise PadTooSmall(f"body of {len(body)} bytes exceeds pad_to={pad_to}")
        missing = pad_to - len(body)
        filler = rng.randbytes(missing) if rng is not None else os.urandom(missing)
        body = body + filler
    tx_id = transaction_id(author.node, kind, body)
    return Transaction(author.node, kind, body, author.sign(_tx_message(tx_id, kind, body)))


@dataclass(frozen=True)
class Signature:
    signer: NodeId
    value: bytes


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: Hash32
    author: NodeId
    turn_index: int
    logical_time: int
    kind: BlockKind
    transactions: tuple[Transaction, ...] = ()
    signatures: tuple[Signature, ...] = ()

    def header_bytes(self) -> bytes:
        parts = [
            u64(self.height),
            bytes(self.prev_hash),
            _encode_node(self.author),
            i64(self.turn_index),
            u64(self.logical_time),
            u64(int(self.kind)),
            u64(len(self.transactions)),
        ]
        for tx in self.transactions:
            parts.append(bytes(tx.id))
            parts.append(lp(tx.signature))
        return b"".join(parts)

    @cached_property
    def hash(self) -> Hash32:
        return hash_block(self)

    def signed_by(self, *signers: Identity) -> "Block":
        digest = bytes(hash_block(self))
        sigs = tuple(Signature(s.node, s.sign(digest)) for s in signers)
        return replace(self, signatures=self.signatures + sigs)

    def encode(self) -> bytes:
        parts = [
            u64(self.height),
            bytes(self.prev_hash),
            _encode_node(self.author),
            i64(self.turn_index),
            u64(self.logical_time),
            u64(int(self.kind)),
            u64(len(self.transactions)),
        ]
        parts.extend(tx.encode() for tx in self.transactions)
        parts.append(u64(len(self.signatures)))
        for sig in self.signatures:
            parts.append(_encode_node(sig.signer))
            parts.append(lp(sig.value))
        return b"".join(parts)

    @classmethod
    def decode(cls, r: Reader) -> "Block":
        height = r.u64()
        prev = Hash32(r.raw(32))
        author = _decode_node(r)
        turn = r.i64()
        time = r.u64()
        kind = BlockKind(r.u64())
        txs = tuple(Transaction.decode(r) for _ in range(r.u64()))
        sigs = []
        for _ in range(r.u64()):
            signer = _decode_node(r)
            sigs.append(Signature(signer, r.lp()))
        return cls(height, prev, author, turn, time, kind, txs, tuple(sigs))


def hash_block(block: Block) -> Hash32:
    """Digest over the canonical header and transaction list (signatures excluded)."""
    return Hash32.of(block.header_bytes())


def link_hash(block: Block) -> Hash32:
    """The value a successor must carry as ``prev_hash``.

    A meta-state genesis stands in for the block it summarizes, so its
    successor links to the anchored hash it carries.
    """
    if block.kind == BlockKind.META_STATE_GENESIS:
        return block.prev_hash
    return block.hash


def structural_problems(block: Block) -> list[str]:
    """Structural findings that do not depend on the predecessor."""
    problems: list[str] = []
    expected = {BlockKind.GENESIS: 0, BlockKind.HANDOVER: 2}.get(block.kind, 1)
    if len(block.signatures) != expected:
        problems.append(f"{block.kind.name} needs {expected} signature(s), has {len(block.signatures)}")
    if not block.transactions and block.kind in (BlockKind.DATA, BlockKind.META_STATE_GENESIS):
        problems.append(f"{block.kind.name} block without transactions")
    if block.kind == BlockKind.GENESIS and block.height != 0:
        problems.append("genesis block must have height 0")
    if block.signatures and block.signatures[0].signer != block.author:
        problems.append("first signature is not the author's")
    if block.kind == BlockKind.HANDOVER and len(block.signatures) == 2:
        if block.signatures[1].signer == block.author:
            problems.append("handover counter-signature by the leader itself")
    return problems


def signature_problems(block: Block) -> list[str]:
    problems: list[str] = []
    digest = bytes(block.hash)
    for sig in block.signatures:
        if not sig.signer.verify(sig.value, digest):
            problems.append(f"block signature by {sig.signer} does not verify")
    for tx in block.transactions:
        if not tx.verify():
            problems.append(f"transaction {tx.id.short()} signature does not verify")
    return problems


@dataclass(frozen=True)
class Chain:
    """Immutable chain value. Appending returns a new Chain."""

    blocks: tuple[Block, ...]
    fixed_upto: int = 0
    invalidated: frozenset[Hash32] = field(default_factory=frozenset)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_hash(self) -> Hash32:
        return self.tip.hash

    @property
    def height(self) -> int:
        return self.tip.height

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self.blocks)

    def transactions(self) -> Iterator[tuple[Block, Transaction]]:
        for block in self.blocks:
            for tx in block.transactions:
                yield block, tx

    @cached_property
    def tx_index(self) -> dict[Hash32, tuple[int, int]]:
        """Transaction id -> (block position, transaction position)."""
        index: dict[Hash32, tuple[int, int]] = {}
        for bpos, block in enumerate(self.blocks):
            for tpos, tx in enumerate(block.transactions):
                index.setdefault(tx.id, (bpos, tpos))
        return index

    @cached_property
    def block_positions(self) -> dict[Hash32, int]:
        return {b.hash: i for i, b in enumerate(self.blocks)}

    def get_tx(self, tx_id: Hash32) -> Transaction | None:
        loc = self.tx_index.get(tx_id)
        if loc is None:
            return None
        return self.blocks[loc[0]].transactions[loc[1]]

    def with_invalidated(self, ids: Iterable[Hash32]) -> "Chain":
        ids = frozenset(ids)
        unknown = [i for i in ids if i not in self.tx_index]
        if unknown:
            raise ChainError(f"cannot invalidate unknown transaction {unknown[0].short()}")
        return replace(self, invalidated=self.invalidated | ids)

    def with_fixed_upto(self, height: int) -> "Chain":
        """Blocks below ``height`` are fixed; ``tip + 1`` fixes the whole chain."""
        if height > self.height + 1:
            raise ChainError("fixed_upto beyond tip")
        return replace(self, fixed_upto=height)

    def total_size(self) -> int:
        return sum(tx.declared_size for _, tx in self.transactions())


def append_block(chain: Chain, block: Block) -> Chain:
    """Return a new chain extended by ``block`` after full structural checks."""
    tip = chain.tip
    if block.prev_hash != link_hash(tip):
        raise BadLink(f"prev_hash {block.prev_hash.short()} does not match tip {link_hash(tip).short()}")
    if block.height != tip.height + 1:
        raise MalformedBlock(f"height {block.height} does not follow {tip.height}")
    if block.kind in GENESIS_KINDS:
        raise MalformedBlock("genesis kinds cannot be appended")
    problems = structural_problems(block)
    if problems:
        raise MalformedBlock("; ".join(problems))
    sig_problems = signature_problems(block)
    if sig_problems:
        raise BadSignature("; ".join(sig_problems))
    return Chain(chain.blocks + (block,), chain.fixed_upto, chain.invalidated)


def new_chain(genesis: Block) -> Chain:
    if genesis.kind not in GENESIS_KINDS:
        raise MalformedBlock("a chain must start with a genesis kind")
    problems = structural_problems(genesis) + signature_problems(genesis)
    if problems:
        raise MalformedBlock("; ".join(problems))
    return Chain((genesis,))


def build_block(
    chain: Chain,
    author: Identity,
    kind: BlockKind,
    transactions: Iterable[Transaction],
    turn_index: int,
    logical_time: int,
    cosigner: Identity | None = None,
) -> Block:
    """Build and sign a block on the chain tip (not appended)."""
    tip = chain.tip
    block = Block(
        height=tip.height + 1,
        prev_hash=link_hash(tip),
        author=author.node,
        turn_index=turn_index,
        logical_time=logical_time,
        kind=kind,
        transactions=tuple(transactions),
    )
    signers = (author,) if cosigner is None else (author, cosigner)
    return block.signed_by(*signers)
