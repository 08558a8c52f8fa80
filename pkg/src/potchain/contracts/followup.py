"""Hidden follow-up movements and the timeout statement they force."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..chain import Hash32
from .commitments import Commitment, ContractError


class SecondFollowUp(ContractError):
    pass


@dataclass(frozen=True)
class FollowUp:
    """A hidden correction (``delta``) to a hidden movement (``base``).

    The base movement was sent at ``send_turn`` and would arrive after
    ``distance`` turns. With ``return_to_origin`` the follow-up is a callback:
    a fleet recalled at turn ``c`` is back home at ``2c - send_turn``.
    """

    base: Hash32
    delta: Commitment
    send_turn: int
    distance: int
    return_to_origin: bool = True

    @property
    def arrival(self) -> int:
        return self.send_turn + self.distance


@dataclass(frozen=True)
class Obligation:
    due: bool
    publish_base: Hash32 | None = None
    callback_range: tuple[int, int] | None = None
    return_range: tuple[int, int] | None = None
    revealed_by_implication: bool = False

    @property
    def width(self) -> int:
        if self.callback_range is None:
            return 0
        lo, hi = self.callback_range
        return max(0, hi - lo + 1)


@dataclass
class FollowUpBook:
    """At most one follow-up per base movement."""

    entries: dict[Hash32, FollowUp] = field(default_factory=dict)

    def follow_up(
        self, base: Hash32, delta: Commitment, send_turn: int, distance: int, return_to_origin: bool = True
    ) -> FollowUp:
        if base in self.entries:
            raise SecondFollowUp(f"movement {base.short()} already has a follow-up")
        if distance < 1:
            raise ValueError("distance must be at least one turn")
        fu = FollowUp(base, delta, send_turn, distance, return_to_origin)
        self.entries[base] = fu
        return fu


def enforce_timeout(fu: FollowUp, now: int, timeout: int | None = None) -> Obligation:
    """Statement owed once the base movement should have arrived.

    The callback must have happened strictly between sending and arrival, so
    the published statement narrows it to ``[send + 1, arrival - 1]`` (also
    cut by ``timeout`` when that comes earlier). A single remaining slot
    discloses the callback round outright.
    """
    deadline = fu.arrival if timeout is None else timeout
    if now < deadline:
        return Obligation(False)
    lo = fu.send_turn + 1
    hi = min(fu.arrival, deadline) - 1
    if hi < lo:
        return Obligation(True, fu.base, None, None, False)
    ret = None
    if fu.return_to_origin:
        ret = (2 * lo - fu.send_turn, 2 * hi - fu.send_turn)
    return Obligation(True, fu.base, (lo, hi), ret, hi == lo)
