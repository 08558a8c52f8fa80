"""Single-owner turn state machine over one chain, with an event log."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from ..chain import (
    Block,
    BlockKind,
    Chain,
    Identity,
    NodeId,
    Signature,
    Transaction,
    append_block,
    build_block,
    hash_block,
)
from .schedule import Leader, Paused, Transition, TurnSchedule, current_leader, timeline_for


class TurnError(Exception):
    pass


class NotLeader(TurnError):
    pass


class TurnExpired(TurnError):
    pass


class WrongSuccessor(TurnError):
    pass


class MissingCounterSignature(TurnError):
    pass


@dataclass(frozen=True)
class Event:
    tick: int
    node: str
    kind: str
    block: str

    def to_json(self) -> str:
        return json.dumps({"tick": self.tick, "node": self.node, "event": self.kind, "block": self.block}, sort_keys=True)


def export_events(events: Iterable[Event], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_events(path: str | Path) -> list[Event]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(Event(d["tick"], d["node"], d["event"], d["block"]))
    return out


class TurnMachine:
    """Advances one chain under a turn schedule.

    Data blocks are allowed only while the author leads and ``now`` is
    before ``turn_end - T`` (the handover margin). Transition blocks may be
    issued during the turn, or while sealing the transition window that
    immediately follows it.
    """

    def __init__(self, schedule: TurnSchedule, chain: Chain) -> None:
        self.schedule = schedule
        self.chain = chain
        self.events: list[Event] = []

    def state(self, now: int):
        return current_leader(now, self.schedule, self.chain)

    def _log(self, now: int, node: NodeId, kind: str, block: Block | None = None) -> None:
        self.events.append(Event(now, str(node), kind, block.hash.hex() if block is not None else "-"))

    def _turn_finished(self, turn: int) -> bool:
        marks = timeline_for(self.schedule, self.chain).marks
        return marks is not None and turn in marks.transition

    def _current_turn_of(self, node: NodeId, now: int, allow_sealing: bool) -> tuple[int, int]:
        """(turn, write_end) of ``node``'s current turn or raise."""
        st = self.state(now)
        if isinstance(st, Leader) and st.node == node:
            return st.turn, st.turn_end
        if allow_sealing and isinstance(st, Transition) and st.prev == node:
            return st.turn, now
        if isinstance(st, Paused):
            raise TurnExpired("the schedule is paused")
        if isinstance(st, Transition) and st.prev == node:
            raise TurnExpired(f"{node}'s turn {st.turn} ended")
        raise NotLeader(f"{node} does not lead at tick {now}")

    def propose_block(self, node: Identity, txs: Sequence[Transaction], now: int) -> Block:
        st = self.state(now)
        if isinstance(st, Transition) and st.prev == node.node:
            raise TurnExpired(f"{node.node}'s turn {st.turn} is over")
        if not (isinstance(st, Leader) and st.node == node.node):
            raise NotLeader(f"{node.node} does not lead at tick {now}")
        if self._turn_finished(st.turn):
            raise TurnExpired("turn already finalized")
        if now >= st.turn_end - self.schedule.transition_duration:
            raise TurnExpired(f"tick {now} lies inside the handover margin before {st.turn_end}")
        block = build_block(self.chain, node, BlockKind.DATA, txs, st.turn, now)
        self.chain = append_block(self.chain, block)
        self._log(now, node.node, "data", block)
        return block

    def finalize_turn(self, leader: Identity, now: int) -> Block:
        turn, _ = self._current_turn_of(leader.node, now, allow_sealing=False)
        if self._turn_finished(turn):
            raise TurnExpired("turn already finalized")
        block = build_block(self.chain, leader, BlockKind.FINALIZING, (), turn, now)
        self.chain = append_block(self.chain, block)
        self._log(now, leader.node, "finalize", block)
        return block

    def prepare_handover(self, leader: Identity, successor: NodeId, now: int) -> Block:
        """Leader-signed handover awaiting the successor's counter-signature."""
        turn, _ = self._current_turn_of(leader.node, now, allow_sealing=True)
        if self._turn_finished(turn):
            raise TurnExpired("turn already sealed")
        expected = self.schedule.leader_of_turn(turn + 1)
        if successor != expected:
            raise WrongSuccessor(f"next leader is {expected}, not {successor}")
        return build_block(self.chain, leader, BlockKind.HANDOVER, (), turn, now)

    def handover(
        self,
        leader: Identity,
        successor: Identity | NodeId,
        now: int,
        counter_signature: bytes | None = None,
    ) -> Block:
        succ_id = successor.node if isinstance(successor, Identity) else successor
        block = self.prepare_handover(leader, succ_id, now)
        if isinstance(successor, Identity):
            block = block.signed_by(successor)
        elif counter_signature is not None:
            block = replace(block, signatures=block.signatures + (Signature(succ_id, counter_signature),))
        else:
            raise MissingCounterSignature(f"{succ_id} has not counter-signed")
        self.chain = append_block(self.chain, block)
        self._log(now, leader.node, "handover", block)
        return block


def countersign(block: Block, successor: Identity) -> bytes:
    return successor.sign(bytes(hash_block(block)))
