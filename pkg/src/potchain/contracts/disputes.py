"""Win claims and dispute resolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from ..chain import Chain, Hash32, NodeId, Transaction
from ..consensus.voting import Outcome
from .commitments import COMMIT_KINDS, REVEAL_KINDS, ContractError, Dispute, Mismatch, parse_reveal, verify_reveal


class RecoverImpossible(ContractError):
    pass


class Strategy(str, Enum):
    VOTE = "vote"
    ESCALATE = "escalate"
    STOP_GAME = "stop-game"
    RECOVER = "recover"


@dataclass
class Verdict:
    granted: bool
    reasons: list[str] = field(default_factory=list)
    disputes: list[Dispute] = field(default_factory=list)


# replays the revealed game and returns rule violations found
Replay = Callable[[Chain, dict], "list[str]"]


def win_claim(claimant: NodeId, chain: Chain, replay: Replay | None = None) -> Verdict:
    """Grant the win only if every commitment of ``claimant`` is revealed and valid."""
    verdict = Verdict(True)
    live = [tx for _, tx in chain.transactions() if tx.id not in chain.invalidated]
    commits = {tx.id: tx for tx in live if tx.author == claimant and tx.kind in COMMIT_KINDS}
    reveals: dict[Hash32, Transaction] = {}
    for tx in live:
        if tx.author == claimant and tx.kind in REVEAL_KINDS:
            target = parse_reveal(tx)[0]
            reveals.setdefault(target, tx)
    revealed = {}
    for cid, ctx in commits.items():
        rtx = reveals.get(cid)
        if rtx is None:
            verdict.reasons.append(f"commitment {cid.short()} ({ctx.kind.name}) never revealed")
            continue
        try:
            revealed[cid] = verify_reveal(ctx, rtx)
        except Mismatch as exc:
            verdict.reasons.append(f"commitment {cid.short()}: {exc}")
    if replay is not None and not verdict.reasons:
        for problem in replay(chain, revealed):
            verdict.reasons.append(problem)
            verdict.disputes.append(Dispute("game-state", claimant, detail=problem))
    verdict.granted = not verdict.reasons
    return verdict


@dataclass
class DisputeOutcome:
    strategy: Strategy
    upheld: bool | None  # True: accusation confirmed; None: no decision (game stopped)
    terminal: bool = False
    excluded_from_win: frozenset[NodeId] = frozenset()
    detail: str = ""


def resolve_dispute(
    dispute: Dispute,
    strategy: Strategy,
    *,
    vote: Callable[[Dispute], Outcome] | None = None,
    helper: Callable[[Dispute], bool] | None = None,
    recover: Callable[[Dispute], bool] | None = None,
    involved: Iterable[NodeId] = (),
) -> DisputeOutcome:
    """Settle ``dispute`` by the chosen strategy.

    A vote passes with the consensus threshold; escalation asks an outside
    helper; stopping the game leaves no winner among the involved parties;
    recovery runs an implementation callback that may find the needed
    secrets lost.
    """
    if strategy is Strategy.VOTE:
        if vote is None:
            raise ValueError("vote strategy needs a vote callback")
        outcome = vote(dispute)
        if not outcome.decided:
            raise ContractError("dispute vote still open")
        return DisputeOutcome(strategy, outcome.passed, detail=f"{outcome.yes} yes, {outcome.no} no, {outcome.silent} silent")
    if strategy is Strategy.ESCALATE:
        if helper is None:
            raise ValueError("escalation needs a helper callback")
        return DisputeOutcome(strategy, helper(dispute))
    if strategy is Strategy.STOP_GAME:
        parties = set(involved)
        for x in (dispute.accused, dispute.opened_by):
            if x is not None:
                parties.add(x)
        return DisputeOutcome(strategy, None, terminal=True, excluded_from_win=frozenset(parties))
    if recover is None:
        raise RecoverImpossible("no recovery procedure configured")
    if not recover(dispute):
        raise RecoverImpossible("the shuffle order and layer keys needed for recovery are lost")
    return DisputeOutcome(strategy, False, detail="state recovered")
