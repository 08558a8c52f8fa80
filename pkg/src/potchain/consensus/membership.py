"""Roster changes (join, leave, kick) and adaptive turn-time adjustments."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Union

from ..chain import Chain, NodeId, Transaction, TransactionKind
from ..chain.codec import Reader, lp, u64
from .schedule import (
    AdaptivePolicy,
    GraceExtension,
    Origin,
    Pause,
    ScheduleAdjustment,
    TurnSchedule,
    timeline_for,
)
from .voting import Outcome


class MembershipError(Exception):
    pass


class BadInsertIndex(MembershipError):
    pass


class UndisclosedObligations(MembershipError):
    pass


class RejoinForbidden(MembershipError):
    pass


class VoteRequired(MembershipError):
    pass


class GraceExhausted(Exception):
    pass


@dataclass(frozen=True)
class JoinProposal:
    node: NodeId
    insert_at: int  # roster position the newcomer will occupy


def _rebase(
    schedule: TurnSchedule, roster: tuple[NodeId, ...], turn: int, keep: NodeId | None, log: Chain | None
) -> TurnSchedule:
    """New roster effective from ``turn``; ``keep`` remains the leader of that turn."""
    tl = timeline_for(schedule, log)
    start = tl.window_of_turn(turn).start if turn >= schedule.origin.turn else schedule.origin.tick
    if keep is not None and keep in roster:
        position = roster.index(keep)
    else:
        position = schedule.position_of_turn(turn) % len(roster)
    return replace(schedule, roster=roster, origin=Origin(turn, start, position))


def join_node(
    schedule: TurnSchedule,
    proposal: JoinProposal,
    vote: Outcome | None,
    current_turn: int,
    trusted: bool = False,
    log: Chain | None = None,
) -> TurnSchedule:
    """Insert a node into the roster without displacing the current leader.

    The newcomer may neither take the leader's position nor become its
    immediate successor.
    """
    if not trusted and (vote is None or not vote.passed):
        raise VoteRequired("joining needs a passed admit vote or a trusted entity")
    if proposal.node.public_key in schedule.retired:
        raise RejoinForbidden(f"{proposal.node} disclosed its keys when leaving")
    if proposal.node in schedule.roster:
        raise MembershipError(f"{proposal.node} is already in the roster")
    n = schedule.n
    p = proposal.insert_at
    if not 0 <= p <= n:
        raise BadInsertIndex(f"insert position {p} outside [0, {n}]")
    leader_pos = schedule.position_of_turn(current_turn)
    successor = p == leader_pos + 1 or (leader_pos == n - 1 and p == 0)
    if p == leader_pos or successor:
        raise BadInsertIndex(f"position {p} would replace or directly follow the leader at {leader_pos}")
    roster = schedule.roster[:p] + (proposal.node,) + schedule.roster[p:]
    leader = schedule.roster[leader_pos]
    return _rebase(schedule, roster, current_turn, leader, log)


def required_disclosures(obligations: dict[NodeId, Iterable[bytes]], node: NodeId) -> frozenset[bytes]:
    return frozenset(obligations.get(node, ()))


def leave_node(
    schedule: TurnSchedule,
    notice: Transaction,
    obligations: dict[NodeId, Iterable[bytes]],
    current_turn: int,
    log: Chain | None = None,
) -> TurnSchedule:
    """Remove the notice's author once it disclosed every secret the network needs.

    The notice body lists disclosed obligation ids as a sequence of
    length-prefixed byte strings (see ``encode_leave_notice``).
    """
    if notice.kind != TransactionKind.LEAVE_NOTICE:
        raise MembershipError("a leave needs a LeaveNotice transaction")
    if not notice.verify():
        raise MembershipError("leave notice signature does not verify")
    node = notice.author
    disclosed = decode_leave_notice(notice.body)
    missing = required_disclosures(obligations, node) - disclosed
    if missing:
        raise UndisclosedObligations(f"{node} leaves without disclosing {len(missing)} obligation(s)")
    return _remove(schedule, node, current_turn, True, log)


def kick_node(
    schedule: TurnSchedule, node: NodeId, vote: Outcome, current_turn: int, log: Chain | None = None
) -> TurnSchedule:
    if not vote.passed:
        raise VoteRequired("kicking needs a passed kick vote")
    return _remove(schedule, node, current_turn, False, log)


def _remove(schedule: TurnSchedule, node: NodeId, current_turn: int, retire: bool, log: Chain | None) -> TurnSchedule:
    if node not in schedule.roster:
        raise MembershipError(f"{node} is not in the roster")
    if schedule.n == 1:
        raise MembershipError("cannot remove the last node")
    roster = tuple(x for x in schedule.roster if x != node)
    leader = schedule.leader_of_turn(current_turn)
    keep = leader if leader != node else schedule.leader_of_turn(current_turn + 1)
    turn = current_turn if leader != node else current_turn + 1
    out = _rebase(schedule, roster, turn, keep, log)
    if retire:
        out = replace(out, retired=out.retired | {node.public_key})
    return out


def encode_leave_notice(disclosed: Iterable[bytes]) -> bytes:
    items = sorted(set(disclosed))
    return u64(len(items)) + b"".join(lp(i) for i in items)


def decode_leave_notice(body: bytes) -> frozenset[bytes]:
    r = Reader(body)
    return frozenset(r.lp() for _ in range(r.u64()))


@dataclass(frozen=True)
class LostLeader:
    node: NodeId
    turn: int


@dataclass(frozen=True)
class NightSwitch:
    node: NodeId
    at: int
    length: int


@dataclass(frozen=True)
class VacationBreak:
    node: NodeId
    at: int
    length: int


AdaptEvent = Union[LostLeader, NightSwitch, VacationBreak]


def adapt_turn_time(schedule: TurnSchedule, event: AdaptEvent, vote: Outcome | None = None) -> ScheduleAdjustment:
    """Translate an adaptive event into a schedule adjustment.

    Lost leaders get the policy's grace while their consecutive grace count
    stays under the cap. Pauses need a passed Pause vote; one node may not
    request more than ``pause_cap`` pauses in a row.
    """
    policy = schedule.adaptive or AdaptivePolicy()
    if isinstance(event, LostLeader):
        streak = 0
        for adj in reversed(schedule.adjustments):
            if isinstance(adj, GraceExtension) and adj.node == event.node:
                streak += 1
            elif isinstance(adj, GraceExtension):
                break
        if streak >= policy.grace_cap:
            raise GraceExhausted(f"{event.node} used {streak} consecutive grace extensions")
        ticks = policy.lost_leader_grace or schedule.turn_duration
        return GraceExtension(event.turn, ticks, event.node)
    if vote is None or not vote.passed:
        raise VoteRequired("pauses need a passed pause vote")
    streak = 0
    for adj in reversed(schedule.adjustments):
        if isinstance(adj, Pause) and adj.requested_by == event.node:
            streak += 1
        elif isinstance(adj, Pause):
            break
    if streak >= policy.pause_cap:
        raise GraceExhausted(f"{event.node} already requested {streak} consecutive pauses")
    return Pause(event.at, event.length, event.node)
