"""Effective consensus finality bookkeeping per block."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable

from ..chain import Hash32, NodeId


class FinalityError(Exception):
    pass


class AlreadyFinal(FinalityError):
    """The block left the Pending state already."""


class Status(str, Enum):
    PENDING = "pending"
    EFFECTIVE_FINAL = "effective-final"
    INVALIDATED = "invalidated"


def as_fraction(value: float | Fraction | str) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


@dataclass
class BlockFinality:
    author: NodeId
    published_turn: int
    silent_passes: set[NodeId] = field(default_factory=set)
    explicit_approvals: set[NodeId] = field(default_factory=set)
    turns_elapsed: int = 0
    disputed: bool = False
    status: Status = Status.PENDING
    final_at: int | None = None


class FinalityTracker:
    """Tracks Pending -> EffectiveFinal | Invalidated for many blocks.

    A block becomes EffectiveFinal once the distinct nodes that passed it
    silently or approved it cover ``theta`` of the active nodes, or
    unconditionally once a full round of turns has elapsed. Silent passes
    are not counted while a dispute on the block is open.
    """

    def __init__(self, active: Iterable[NodeId], theta: float | Fraction = Fraction(1, 2), round_length: int | None = None) -> None:
        self.active = frozenset(active)
        self.theta = as_fraction(theta)
        self.round_length = round_length if round_length is not None else len(self.active)
        self.blocks: dict[Hash32, BlockFinality] = {}

    def track(self, block_hash: Hash32, author: NodeId, published_turn: int) -> None:
        self.blocks.setdefault(block_hash, BlockFinality(author, published_turn))

    def status(self, block_hash: Hash32) -> Status:
        return self.blocks[block_hash].status

    def _pending(self, block_hash: Hash32) -> BlockFinality:
        entry = self.blocks[block_hash]
        if entry.status is not Status.PENDING:
            raise AlreadyFinal(f"block {block_hash.short()} is {entry.status.value}")
        return entry

    def _covered(self, entry: BlockFinality) -> bool:
        supporters = (entry.silent_passes | entry.explicit_approvals) & self.active
        return bool(supporters) and len(supporters) >= self.theta * len(self.active)

    def _settle(self, entry: BlockFinality, now: int | None) -> Status:
        if self._covered(entry) or entry.turns_elapsed >= self.round_length - 1:
            entry.status = Status.EFFECTIVE_FINAL
            entry.final_at = now
        return entry.status

    def record_pass(self, block_hash: Hash32, completed_turn_author: NodeId, now: int | None = None) -> Status:
        """A later turn completed without intervention against the block."""
        entry = self._pending(block_hash)
        entry.turns_elapsed += 1
        if completed_turn_author != entry.author and not entry.disputed:
            entry.silent_passes.add(completed_turn_author)
        return self._settle(entry, now)

    def approve(self, block_hash: Hash32, node: NodeId, now: int | None = None) -> Status:
        entry = self._pending(block_hash)
        entry.explicit_approvals.add(node)
        return self._settle(entry, now)

    def dispute(self, block_hash: Hash32, open_: bool = True) -> None:
        entry = self.blocks[block_hash]
        if entry.status is Status.PENDING:
            entry.disputed = open_

    def invalidate(self, block_hash: Hash32) -> Status:
        """Apply a passed invalidation vote; only possible while Pending."""
        entry = self._pending(block_hash)
        entry.status = Status.INVALIDATED
        return entry.status

    def pending(self) -> list[Hash32]:
        return [h for h, e in self.blocks.items() if e.status is Status.PENDING]
