"""Threshold votes where silence counts as consent at the deadline."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable

from ..chain import Hash32, NodeId
from .finality import as_fraction


class VoteError(Exception):
    pass


class DoubleBallot(VoteError):
    pass


class VoteClosed(VoteError):
    pass


class Question(str, Enum):
    INVALIDATE_TX = "invalidate-tx"
    INVALIDATE_BLOCK_TXS = "invalidate-block-txs"
    KICK_NODE = "kick-node"
    PAUSE = "pause"
    ACCEPT_PRUNE = "accept-prune"
    ADMIT_NODE = "admit-node"
    FORK_CHOICE = "fork-choice"


@dataclass(frozen=True)
class Outcome:
    decided: bool
    passed: bool
    yes: int
    no: int
    silent: int
    active: int
    early: bool = False

    @property
    def yes_fraction(self) -> Fraction:
        return Fraction(self.yes + self.silent, self.active) if self.active else Fraction(0)


@dataclass
class VoteState:
    call: Hash32
    question: Question
    subject: bytes
    deadline: int
    threshold: Fraction = Fraction(1, 2)
    ballots: dict[NodeId, bool] = field(default_factory=dict)
    opened_by: NodeId | None = None
    result: Outcome | None = None


def open_vote(
    call: Hash32,
    question: Question,
    subject: bytes,
    now: int,
    round_ticks: int,
    threshold: float | Fraction = Fraction(1, 2),
    opened_by: NodeId | None = None,
    deadline: int | None = None,
) -> VoteState:
    """Open a vote; the deadline defaults to one full round after ``now``."""
    return VoteState(
        call,
        question,
        subject,
        deadline if deadline is not None else now + round_ticks,
        as_fraction(threshold),
        opened_by=opened_by,
    )


def cast_ballot(vote: VoteState, node: NodeId, yes: bool, now: int) -> None:
    if vote.result is not None or now > vote.deadline:
        raise VoteClosed(f"vote {vote.call.short()} is closed")
    if node in vote.ballots:
        raise DoubleBallot(f"{node} already voted on {vote.call.short()}")
    vote.ballots[node] = yes


def tally(vote: VoteState, active: Iterable[NodeId], now: int) -> Outcome:
    """Count the vote.

    Before the deadline only a mathematically settled vote is decided:
    explicit yes already reaching the threshold passes it, and explicit no
    large enough that even full consent of the rest cannot reach it fails it.
    At or after the deadline every active non-voter counts as yes.
    """
    if vote.result is not None:
        return vote.result
    active = frozenset(active)
    n = len(active)
    yes = sum(1 for node, b in vote.ballots.items() if b and node in active)
    no = sum(1 for node, b in vote.ballots.items() if not b and node in active)
    silent = n - yes - no
    theta = vote.threshold
    if n == 0:
        out = Outcome(True, False, 0, 0, 0, 0)
    elif now >= vote.deadline:
        out = Outcome(True, Fraction(yes + silent, n) >= theta, yes, no, silent, n)
    elif Fraction(yes, n) >= theta:
        out = Outcome(True, True, yes, no, silent, n, early=True)
    elif Fraction(n - no, n) < theta:
        out = Outcome(True, False, yes, no, silent, n, early=True)
    else:
        return Outcome(False, False, yes, no, silent, n)
    vote.result = out
    return out
