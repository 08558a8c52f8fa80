"""Getting an out-of-turn trigger onto the chain."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

from ..chain import NodeId, Transaction
from .commitments import ContractError, Dispute


class TriggerMechanism(str, Enum):
    PIPE_VIA_LN = "pipe"  # the leader relays the claimant's signed transaction
    TRIGGER_ROUND = "round"  # a fast round collecting every node's trigger intents
    DETOUR = "detour"  # writing permission lent to the claimant and returned


class IgnoredByLeader(ContractError):
    def __init__(self, leader: NodeId, tx: Transaction) -> None:
        super().__init__(f"leader {leader} ignored trigger {tx.id.short()}")
        self.dispute = Dispute("ignored-trigger", leader, bytes(tx.id), opened_by=tx.author)
        self.affected = (tx.id,)


class RoundStalled(ContractError):
    def __init__(self, missing: Iterable[NodeId]) -> None:
        self.missing = sorted(missing)
        super().__init__(f"{len(self.missing)} node(s) did not answer the trigger round")


@dataclass(frozen=True)
class Intent:
    tick: int
    node: NodeId
    tx: Transaction

    def order_key(self) -> tuple[int, bytes]:
        return (self.tick, self.node.public_key)


@dataclass
class TriggerOutcome:
    mechanism: TriggerMechanism
    included: list[Transaction] = field(default_factory=list)
    rounds: int = 0
    writer_log: list[NodeId] = field(default_factory=list)


# per-node answer for one consultation: the intents it raises now, or None when silent
Responder = Callable[[NodeId, int, list[Intent]], "list[Intent] | None"]


def trigger(
    mechanism: TriggerMechanism,
    claimant: NodeId,
    payload: Transaction,
    leader: NodeId,
    *,
    relay: Callable[[Transaction], bool] | None = None,
    nodes: Iterable[NodeId] = (),
    respond: Responder | None = None,
    now: int = 0,
    max_rounds: int = 16,
    write: Callable[[NodeId, list[Transaction]], None] | None = None,
) -> TriggerOutcome:
    """Run one trigger through ``mechanism``.

    Pipe: ``relay(tx)`` returns whether the leader included it. Trigger
    round: ``respond(node, round, seen)`` is asked for each node until a
    round adds no new intents; intents are ordered by (tick, node key).
    Detour: ``write(node, txs)`` is called for the claimant, then for the
    leader taking its permission back.
    """
    if claimant == leader:
        raise ValueError("the leader writes directly and needs no trigger")
    if payload.author != claimant:
        raise ContractError("the trigger must be signed by the claimant")
    out = TriggerOutcome(mechanism)
    if mechanism is TriggerMechanism.PIPE_VIA_LN:
        if relay is None:
            raise ValueError("pipe mechanism needs a relay callback")
        if not relay(payload):
            raise IgnoredByLeader(leader, payload)
        out.included = [payload]
        return out
    if mechanism is TriggerMechanism.TRIGGER_ROUND:
        if respond is None:
            raise ValueError("trigger round needs a responder")
        seen: list[Intent] = [Intent(now, claimant, payload)]
        known = {payload.id}
        members = [x for x in nodes if x != claimant]
        for rnd in range(1, max_rounds + 1):
            out.rounds = rnd
            fresh: list[Intent] = []
            missing = []
            for node in members:
                answer = respond(node, rnd, list(seen))
                if answer is None:
                    missing.append(node)
                    continue
                fresh.extend(i for i in answer if i.tx.id not in known)
            if missing:
                raise RoundStalled(missing)
            if not fresh:
                break
            for i in fresh:
                known.add(i.tx.id)
            seen.extend(fresh)
        else:
            raise RoundStalled([])
        out.included = [i.tx for i in sorted(seen, key=Intent.order_key)]
        return out
    if write is None:
        raise ValueError("detour needs a write callback")
    write(claimant, [payload])
    write(leader, [])
    out.included = [payload]
    out.writer_log = [claimant, leader]
    return out
