"""Commit-reveal randomization sessions and the deterministic generator."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from enum import Enum

from cryptography.exceptions import InvalidTag

from ..chain import Hash32, NodeId
from ..chain.codec import Reader, u64
from .commitments import ContractError, Dispute, Mismatch, decrypt_once, encrypt_once

MASK64 = (1 << 64) - 1
RANGE_READING_STATE = 0x5EED  # fixed generator state for the range reading


class InitiatorSilent(ContractError):
    def __init__(self, initiator: NodeId) -> None:
        super().__init__(f"initiator {initiator} did not reveal")
        self.dispute = Dispute("initiator-silent", initiator)


class SessionOpen(ContractError):
    """Neither every contributor revealed nor has the deadline passed."""


class RandomMode(str, Enum):
    BROADCAST = "broadcast"
    PRIVATE_TO_INITIATOR = "private-to-initiator"


class Reading(str, Enum):
    PRNG = "prng"  # generator seeded with the sum, mapped into [low, high]
    RANGE = "range"  # the sum is the upper bound of a draw from [1, sum]


def splitmix64(state: int) -> int:
    z = (state + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def generator(seed: int, low: int = 1, high: int | None = None, reading: Reading = Reading.PRNG) -> int:
    """Map a session seed to an integer.

    PRNG reading: ``low + splitmix64(seed) mod (high - low + 1)`` with ``high``
    defaulting to ``seed``. Range reading: uniform pick from ``[1, seed]``
    using a fixed generator state.
    """
    if reading is Reading.RANGE:
        if seed < 1:
            raise ValueError("range reading needs a positive sum")
        return 1 + splitmix64(RANGE_READING_STATE) % seed
    high = seed if high is None else high
    if high < low:
        raise ValueError(f"empty range [{low}, {high}]")
    return low + splitmix64(seed & MASK64) % (high - low + 1)


def contribution_digest(value: int, salt: bytes) -> Hash32:
    return Hash32(hashlib.sha256(u64(value) + salt).digest())


def seal_contribution(value: int, salt: bytes, key: bytes) -> bytes:
    """Value encrypted for the initiator; the key is published after the window."""
    return encrypt_once(key, u64(value) + salt)


@dataclass
class RandomizationSession:
    initiator: NodeId
    deadline: int
    low: int = 1
    high: int | None = None
    reading: Reading = Reading.PRNG
    mode: RandomMode = RandomMode.BROADCAST
    commits: dict[NodeId, Hash32] = field(default_factory=dict)
    reveals: dict[NodeId, int] = field(default_factory=dict)
    sealed: dict[NodeId, bytes] = field(default_factory=dict)

    def commit(self, node: NodeId, digest: Hash32, now: int | None = None) -> None:
        if now is not None and now > self.deadline:
            raise ContractError("commit after the session deadline")
        if node in self.commits:
            raise ContractError(f"{node} already committed")
        self.commits[node] = digest

    def reveal(self, node: NodeId, value: int, salt: bytes) -> None:
        digest = self.commits.get(node)
        if digest is None:
            raise ContractError(f"{node} never committed")
        if contribution_digest(value, salt) != digest:
            raise Mismatch("revealed value does not match the commitment", node)
        self.reveals[node] = value

    def send_sealed(self, node: NodeId, sealed: bytes) -> None:
        if self.mode is not RandomMode.PRIVATE_TO_INITIATOR:
            raise ContractError("sealed contributions need the private-to-initiator mode")
        self.sealed[node] = sealed

    def publish_key(self, node: NodeId, key: bytes) -> None:
        try:
            plain = decrypt_once(key, self.sealed[node])
        except (KeyError, InvalidTag, ValueError):
            raise Mismatch("published key does not open the sealed value", node) from None
        r = Reader(plain)
        value = r.u64()
        self.reveal(node, value, plain[r.pos:])

    @property
    def seed(self) -> int:
        return sum(self.reveals.values())

    def complete(self) -> bool:
        return set(self.commits) <= set(self.reveals)


def random_run(session: RandomizationSession, now: int | None = None, at_least_one: bool = False) -> int:
    """Output of a finished session.

    Finished means every committed contributor revealed, or the deadline
    passed (non-revealers are left out of the seed). With ``at_least_one``
    the session may close as soon as the initiator revealed, with a warning
    because late contributors then cannot be waited for.
    """
    done = session.complete() or (now is not None and now >= session.deadline)
    if not done and at_least_one and session.reveals:
        warnings.warn("closing a randomization session before all contributors revealed", stacklevel=2)
        done = True
    if not done:
        raise SessionOpen("session still waiting for reveals")
    if session.initiator not in session.reveals:
        raise InitiatorSilent(session.initiator)
    return generator(session.seed, session.low, session.high, session.reading)
