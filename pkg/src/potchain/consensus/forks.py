"""Fork resolution by the most progressive chain rule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

from ..chain import Block, Hash32, NodeId, Transaction


class NoCommonAncestor(Exception):
    pass


@dataclass(frozen=True)
class Branch:
    """Chain suffix after ``ancestor`` (the hash its first block links to)."""

    ancestor: Hash32
    blocks: tuple[Block, ...] = ()

    @classmethod
    def of(cls, blocks: Sequence[Block], ancestor: Hash32 | None = None) -> "Branch":
        if ancestor is None:
            if not blocks:
                raise ValueError("an empty branch needs an explicit ancestor")
            ancestor = blocks[0].prev_hash
        return cls(ancestor, tuple(blocks))

    @property
    def turns_represented(self) -> int:
        return len({(b.author, b.turn_index) for b in self.blocks})

    @property
    def first_author(self) -> NodeId | None:
        return self.blocks[0].author if self.blocks else None

    def transactions(self) -> list[Transaction]:
        return [tx for b in self.blocks for tx in b.transactions]


@dataclass(frozen=True)
class Merge:
    """Keep ``base``; re-encapsulate the other branches' new transactions onto it."""

    base: int
    absorbed: tuple[Transaction, ...]


@dataclass(frozen=True)
class VoteChoice:
    chosen: int
    reset_to: Hash32 | None = None


@dataclass(frozen=True)
class ContinueMostProgressive:
    chosen: int
    tie_break: str = "none"  # none | randomization | lowest-author
    vote_failed: bool = False


Resolution = Union[Merge, VoteChoice, ContinueMostProgressive]


@dataclass
class ForkPolicy:
    """Application hooks for the resolution choices.

    ``compatible`` decides whether branches are soft-exclusive (mergeable).
    ``vote`` returns the chosen branch index, or None when the vote failed.
    ``randomize`` picks among tied indices, or None when the call timed out.
    """

    compatible: Callable[[Sequence[Branch]], bool] | None = None
    vote: Callable[[Sequence[Branch]], int | None] | None = None
    randomize: Callable[[Sequence[int]], int | None] | None = None
    randomization_calls: list[tuple[int, ...]] = field(default_factory=list)


def most_progressive(branches: Sequence[Branch], policy: ForkPolicy | None = None) -> ContinueMostProgressive:
    policy = policy or ForkPolicy()
    scores = [b.turns_represented for b in branches]
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s == best]
    if len(tied) == 1:
        return ContinueMostProgressive(tied[0])
    policy.randomization_calls.append(tuple(tied))
    pick = policy.randomize(tied) if policy.randomize is not None else None
    if pick is not None:
        if pick not in tied:
            raise ValueError("randomization picked a non-tied branch")
        return ContinueMostProgressive(pick, "randomization")

    def author_key(i: int) -> bytes:
        author = branches[i].first_author
        return author.public_key if author is not None else b"\xff" * 33

    return ContinueMostProgressive(min(tied, key=author_key), "lowest-author")


def resolve_fork(branches: Sequence[Branch], policy: ForkPolicy | None = None) -> Resolution:
    """Choose how to continue after a fork.

    Order: merge soft-exclusive branches, else a dispute vote, else the
    branch with the most distinct turns (never simply the most blocks).
    Following several branches at once is not offered.
    """
    if not branches:
        raise ValueError("no branches given")
    ancestors = {b.ancestor for b in branches}
    if len(ancestors) != 1:
        raise NoCommonAncestor("branches do not share a common ancestor")
    policy = policy or ForkPolicy()
    if len(branches) == 1:
        return ContinueMostProgressive(0)
    if policy.compatible is not None and policy.compatible(branches):
        base = most_progressive(branches, policy).chosen
        seen = {tx.id for tx in branches[base].transactions()}
        absorbed: list[Transaction] = []
        for i, br in enumerate(branches):
            if i == base:
                continue
            for tx in br.transactions():
                if tx.id not in seen:
                    seen.add(tx.id)
                    absorbed.append(tx)
        return Merge(base, tuple(absorbed))
    if policy.vote is not None:
        choice = policy.vote(branches)
        if choice is not None:
            return VoteChoice(choice)
        fallback = most_progressive(branches, policy)
        return ContinueMostProgressive(fallback.chosen, fallback.tie_break, vote_failed=True)
    return most_progressive(branches, policy)
