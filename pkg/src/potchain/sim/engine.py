"""Deterministic tick-driven simulation of a roster running the turn protocol."""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable

from ..chain import (
    TRANSITION_KINDS,
    Block,
    BlockKind,
    Chain,
    ChainError,
    GenesisConfig,
    Hash32,
    Identity,
    NodeId,
    Transaction,
    TransactionKind,
    append_block,
    build_block,
    deterministic_roster,
    link_hash,
    make_transaction,
    new_chain,
)
from ..consensus import (
    AdaptivePolicy,
    AlreadyFinal,
    Branch,
    EarlyFinalize,
    Event,
    FinalityTracker,
    ForkPolicy,
    Leader,
    Question,
    Status,
    Transition,
    TurnMachine,
    TurnSchedule,
    cast_ballot,
    countersign,
    current_leader,
    open_vote,
    resolve_fork,
    tally,
)
from ..consensus.machine import TurnError
from ..consensus.schedule import timeline_for
from ..consensus.voting import DoubleBallot, VoteClosed, VoteState
from ..contracts.commitments import bloat_reveal_transaction, make_bloat
from ..peering import drains, pull_interval
from ..storage import MB, prune_plan, replay_state, write_series_csv
from ..storage.compaction import COMMIT_KINDS, RevealIndex, _encode_state
from .config import ConfigInvalid, FaultEvent, SimConfig, load_scenario


@dataclass(frozen=True)
class Message:
    kind: str
    sender: int
    payload: Any = None


@dataclass
class Trace:
    lines: list[str] = field(default_factory=list)

    def add(self, ev: Event) -> None:
        self.lines.append(ev.to_json())

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def write(self, path: str | Path) -> str:
        Path(path).write_text(self.text(), encoding="utf-8")
        return self.digest


@dataclass
class Metrics:
    cf_latency: list[tuple[str, str, int]] = field(default_factory=list)  # (block, node, ticks)
    forks: int = 0
    fork_resolutions: list[str] = field(default_factory=list)
    messages: Counter = field(default_factory=Counter)
    storage: list[tuple[int, int, int, str, int]] = field(default_factory=list)  # (tick, node, txs, mode, bytes)
    missed_turns: int = 0
    resets: int = 0
    votes: list[tuple[str, bool, int, int, int]] = field(default_factory=list)
    dual_leader_ticks: int = 0
    conflicts: int = 0
    forced_invalidations: int = 0
    handovers: int = 0
    finalizings: int = 0
    data_blocks: int = 0
    rejected_blocks: int = 0
    turns_observed: int = 0
    byzantine: tuple[int, ...] = ()

    def summary(self) -> dict[str, Any]:
        lat = [x for _, _, x in self.cf_latency]
        return {
            "forks": self.forks,
            "conflicts": self.conflicts,
            "forced_invalidations": self.forced_invalidations,
            "dual_leader_ticks": self.dual_leader_ticks,
            "handovers": self.handovers,
            "finalizings": self.finalizings,
            "data_blocks": self.data_blocks,
            "rejected_blocks": self.rejected_blocks,
            "missed_turns": self.missed_turns,
            "resets": self.resets,
            "turns_observed": self.turns_observed,
            "votes": len(self.votes),
            "messages": sum(self.messages.values()),
            "cf_latency_mean": round(sum(lat) / len(lat), 3) if lat else None,
            "cf_latency_max": max(lat) if lat else None,
        }


@dataclass
class SimNode:
    idx: int
    identity: Identity
    machine: TurnMachine
    tracker: FinalityTracker
    rng: random.Random
    skew: int = 0
    crashed: bool = False
    silenced_until: int = -1
    behaviors: set[str] = field(default_factory=set)
    store: dict[Hash32, Block] = field(default_factory=dict)
    done: set[tuple[int, str]] = field(default_factory=set)
    countersigs: dict[int, bytes] = field(default_factory=dict)
    handover_drafts: dict[int, Block] = field(default_factory=dict)
    votes: dict[Hash32, VoteState] = field(default_factory=dict)
    vote_subjects: dict[Hash32, Hash32] = field(default_factory=dict)
    settled: set[Hash32] = field(default_factory=set)
    passes: set[tuple[Hash32, Hash32]] = field(default_factory=set)
    asked: dict[tuple[int, int], int] = field(default_factory=dict)
    bloat_seeds: list[tuple[Transaction, bytes]] = field(default_factory=list)
    next_pull: int = 0
    missed_streak: int = 0
    last_checked_turn: int = -1
    final_seen: set[Hash32] = field(default_factory=set)

    @property
    def node(self) -> NodeId:
        return self.identity.node

    @property
    def chain(self) -> Chain:
        return self.machine.chain

    @property
    def byzantine(self) -> bool:
        return bool(self.behaviors)

    def down(self, tick: int) -> bool:
        return self.crashed or tick < self.silenced_until


def block_timing_ok(schedule: TurnSchedule, chain: Chain, block: Block) -> bool:
    """Whether ``block`` was issued inside its author's window as seen from ``chain``."""
    if block.logical_time < schedule.origin.tick:
        return False
    st = current_leader(block.logical_time, schedule, chain)
    if block.kind == BlockKind.DATA:
        return (
            isinstance(st, Leader)
            and st.node == block.author
            and st.turn == block.turn_index
            and block.logical_time < st.turn_end - schedule.transition_duration
        )
    if block.kind in TRANSITION_KINDS:
        if isinstance(st, Leader):
            return st.node == block.author and st.turn == block.turn_index
        if isinstance(st, Transition):
            return st.prev == block.author and st.turn == block.turn_index
        return False
    return False


class Simulation:
    def __init__(self, config: SimConfig, events: Iterable[FaultEvent] | None = None) -> None:
        self.config = config.validate()
        if events is None:
            events = load_scenario(config.scenario) if config.scenario else []
        self.events = sorted(events, key=lambda e: e.at)
        for ev in self.events:
            for i in ev.nodes + tuple(x for g in ev.groups for x in g):
                if not 0 <= i < config.nodes:
                    raise ConfigInvalid(f"scenario refers to node {i} outside the roster")
        c = self.config
        self.rng = random.Random(c.seed)
        ids = deterministic_roster(c.nodes, c.seed)
        self.roster = tuple(i.node for i in ids)
        genesis = GenesisConfig(f"sim-{c.seed}", self.roster, c.turn, c.transition).genesis_block()
        adaptive = AdaptivePolicy(c.grace, c.grace_cap) if c.grace else None
        self.schedule = TurnSchedule(
            self.roster, c.turn, c.transition, early_finalize=EarlyFinalize.WAIT, adaptive=adaptive
        )
        base = new_chain(genesis)
        self.latency = {
            (a, b): self.rng.randint(1, c.latency) for a in range(c.nodes) for b in range(c.nodes) if a != b
        }
        k = math.floor(c.byzantine * c.nodes)
        byz = sorted(self.rng.sample(range(c.nodes), k)) if k else []
        self.nodes: list[SimNode] = []
        for i, ident in enumerate(ids):
            node = SimNode(
                i,
                ident,
                TurnMachine(self.schedule, base),
                FinalityTracker(self.roster, c.theta, c.nodes),
                random.Random(c.seed * 1_000_003 + i),
            )
            node.store[genesis.hash] = genesis
            if i in byz:
                node.behaviors = set(c.behaviors)
            if c.skew_node == i:
                node.skew = c.skew
            self.nodes.append(node)
        self.metrics = Metrics(byzantine=tuple(byz))
        self.trace = Trace()
        self.queue: list[tuple[int, int, int, Message]] = []
        self.seq = 0
        self.partition: dict[int, int] | None = None
        self.tick = 0
        self.invalidated_honest: set[Hash32] = set()
        self.fork_points: set[tuple[bytes, bytes]] = set()

    # messaging

    def label(self, i: int) -> str:
        return self.roster[i].label

    def log(self, i: int | None, kind: str, detail: str = "-") -> None:
        self.trace.add(Event(self.tick, self.label(i) if i is not None else "-", kind, detail))

    def connected(self, a: int, b: int) -> bool:
        if self.partition is None:
            return True
        return self.partition.get(a, -1) == self.partition.get(b, -1)

    def send(self, src: int, dst: int, msg: Message) -> None:
        if src == dst or self.nodes[src].down(self.tick) or not self.connected(src, dst):
            return
        self.metrics.messages[msg.kind] += 1
        self.seq += 1
        heapq.heappush(self.queue, (self.tick + self.latency[(src, dst)], self.seq, dst, msg))

    def broadcast(self, src: int, msg: Message, targets: Iterable[int] | None = None) -> None:
        for dst in targets if targets is not None else range(len(self.nodes)):
            self.send(src, dst, msg)

    def push_block(self, src: int, block: Block, origin: int | None = None) -> None:
        """Send along the decimal tree rooted at the block's author (or directly)."""
        if self.config.peering == "pull":
            return
        n = len(self.nodes)
        root = self.roster.index(block.author) if origin is None else origin
        me = (src - root) % n
        for d in drains(me, n):
            self.send(src, (root + d) % n, Message("block", src, block))

    # faults

    def apply_fault(self, ev: FaultEvent) -> None:
        self.log(None, "fault", ev.describe())
        if ev.kind == "partition":
            self.partition = {}
            for gi, group in enumerate(ev.groups):
                for i in group:
                    self.partition[i] = gi
        elif ev.kind == "heal":
            self.partition = None
            for node in self.nodes:
                self.broadcast_fingerprint(node)
        elif ev.kind == "crash":
            self.nodes[ev.nodes[0]].crashed = True
        elif ev.kind == "recover":
            node = self.nodes[ev.nodes[0]]
            node.crashed = False
            self.broadcast_fingerprint(node)
        elif ev.kind == "silence":
            self.nodes[ev.nodes[0]].silenced_until = self.tick + ev.value
        elif ev.kind == "byzantine":
            self.nodes[ev.nodes[0]].behaviors.add(ev.behavior)
            self.metrics.byzantine = tuple(sorted(set(self.metrics.byzantine) | {ev.nodes[0]}))
        elif ev.kind == "skew":
            self.nodes[ev.nodes[0]].skew = ev.value

    # chain bookkeeping

    def on_appended(self, node: SimNode, block: Block) -> None:
        node.store[block.hash] = block
        if block.kind in (BlockKind.GENESIS, BlockKind.META_STATE_GENESIS):
            return
        node.tracker.track(block.hash, block.author, block.turn_index)
        if block.kind in TRANSITION_KINDS:
            self.apply_passes(node, block)
            self.broadcast_fingerprint(node)

    def apply_passes(self, node: SimNode, transition: Block) -> None:
        for b in node.chain.blocks:
            if b is transition or b.hash == transition.hash:
                break
            if b.kind in (BlockKind.GENESIS, BlockKind.META_STATE_GENESIS):
                continue
            if b.turn_index >= transition.turn_index:
                continue
            key = (b.hash, transition.hash)
            if key in node.passes:
                continue
            node.passes.add(key)
            try:
                status = node.tracker.record_pass(b.hash, transition.author, self.tick)
            except AlreadyFinal:
                continue
            if status is Status.EFFECTIVE_FINAL and b.hash not in node.final_seen:
                node.final_seen.add(b.hash)
                if not node.byzantine:
                    self.metrics.cf_latency.append((b.hash.hex()[:16], self.label(node.idx), self.tick - b.logical_time))
                self.log(node.idx, "final", b.hash.hex())

    def refresh_finality(self, node: SimNode) -> None:
        for b in node.chain.blocks:
            node.store[b.hash] = b
            if b.kind in (BlockKind.GENESIS, BlockKind.META_STATE_GENESIS):
                continue
            node.tracker.track(b.hash, b.author, b.turn_index)
            node.tracker.dispute(b.hash, False)
        for b in node.chain.blocks:
            if b.kind in TRANSITION_KINDS:
                self.apply_passes(node, b)

    def set_chain(self, node: SimNode, chain: Chain) -> None:
        node.machine.chain = chain

    def try_append(self, node: SimNode, block: Block) -> bool:
        chain = node.chain
        if block.prev_hash != link_hash(chain.tip) or block.height != chain.height + 1:
            return False
        if not block_timing_ok(self.schedule, chain, block):
            self.metrics.rejected_blocks += 1
            self.log(node.idx, "reject", block.hash.hex())
            return False
        try:
            self.set_chain(node, append_block(chain, block))
        except ChainError:
            self.metrics.rejected_blocks += 1
            self.log(node.idx, "reject", block.hash.hex())
            return False
        self.on_appended(node, block)
        return True

    def broadcast_fingerprint(self, node: SimNode) -> None:
        tip = node.chain.tip
        self.broadcast(node.idx, Message("fingerprint", node.idx, (tip.height, tip.hash)))

    def ask_chain(self, node: SimNode, peer: int, height: int) -> None:
        key = (peer, height)
        last = node.asked.get(key)
        if last is not None and self.tick - last < 2 * self.config.latency + 1:
            return
        node.asked[key] = self.tick
        self.send(node.idx, peer, Message("chain-request", node.idx))

    def reconcile(self, node: SimNode, blocks: tuple[Block, ...]) -> None:
        mine = node.chain.blocks
        common = 0
        while common < min(len(mine), len(blocks)) and mine[common].hash == blocks[common].hash:
            common += 1
        if common == 0 or common == len(blocks):
            return
        if common == len(mine):
            for b in blocks[common:]:
                if not self.try_append(node, b):
                    break
            return
        # a fork: validate the other suffix on top of the common prefix
        cand = Chain(mine[:common], min(node.chain.fixed_upto, common), frozenset())
        for b in blocks[common:]:
            if b.prev_hash != link_hash(cand.tip) or not block_timing_ok(self.schedule, cand, b):
                break
            try:
                cand = append_block(cand, b)
            except ChainError:
                break
        if len(cand) == common:
            return
        ours = Branch.of(mine[common:])
        theirs = Branch.of(cand.blocks[common:])
        branches = [ours, theirs]

        def lower_hash(tied):
            return min(tied, key=lambda i: bytes(branches[i].blocks[0].hash))

        resolution = resolve_fork(branches, ForkPolicy(randomize=lower_hash))
        chosen = resolution.chosen
        key = (bytes(ours.ancestor), min(bytes(ours.blocks[0].hash), bytes(theirs.blocks[0].hash)))
        if key not in self.fork_points:
            self.fork_points.add(key)
            self.metrics.forks += 1
            self.metrics.fork_resolutions.append(f"{type(resolution).__name__}:{getattr(resolution, 'tie_break', '-')}")
        self.log(node.idx, "fork", f"{ours.blocks[0].hash.hex()[:16]}/{theirs.blocks[0].hash.hex()[:16]}->{chosen}")
        if chosen == 1:
            present = {tx.id for b in cand.blocks for tx in b.transactions}
            self.set_chain(node, Chain(cand.blocks, cand.fixed_upto, frozenset(i for i in node.chain.invalidated if i in present)))
            self.refresh_finality(node)
            self.broadcast_fingerprint(node)

    # message handling

    def deliver(self, dst: int, msg: Message) -> None:
        node = self.nodes[dst]
        if node.down(self.tick):
            return
        kind = msg.kind
        if kind == "block":
            block: Block = msg.payload
            if block.hash in node.chain.block_positions:
                return
            fresh = block.hash not in node.store
            node.store.setdefault(block.hash, block)
            if self.try_append(node, block):
                self.push_block(dst, block)
            elif fresh and block.height > 0 and block.prev_hash != link_hash(node.chain.tip):
                self.ask_chain(node, msg.sender, block.height)
        elif kind == "fingerprint":
            height, h = msg.payload
            mine = next((b for b in node.chain.blocks if b.height == height), None)
            if mine is None or mine.hash != h:
                if mine is not None:
                    for b in node.chain.blocks:
                        if b.height >= height and b.hash in node.tracker.blocks:
                            node.tracker.dispute(b.hash, True)
                self.ask_chain(node, msg.sender, height)
        elif kind == "chain-request":
            self.send(dst, msg.sender, Message("chain", dst, node.chain.blocks))
        elif kind == "chain":
            self.reconcile(node, msg.payload)
            for b in node.chain.blocks:
                if b.hash in node.tracker.blocks:
                    node.tracker.dispute(b.hash, False)
        elif kind == "pull":
            known = msg.payload
            pos = node.chain.block_positions.get(known)
            blocks = node.chain.blocks if pos is None else node.chain.blocks[pos + 1:]
            if blocks:
                kind_out = "chain" if pos is None else "suffix"
                self.send(dst, msg.sender, Message(kind_out, dst, blocks))
        elif kind == "suffix":
            for b in msg.payload:
                if b.hash in node.chain.block_positions:
                    continue
                if not self.try_append(node, b):
                    self.ask_chain(node, msg.sender, b.height)
                    break
        elif kind == "countersign-request":
            block: Block = msg.payload
            expected = self.schedule.leader_of_turn(block.turn_index + 1)
            if expected == node.node and block.prev_hash == link_hash(node.chain.tip):
                self.send(dst, msg.sender, Message("countersign", dst, (block.turn_index, countersign(block, node.identity))))
        elif kind == "countersign":
            turn, sig = msg.payload
            draft = node.handover_drafts.get(turn)
            if draft is not None and self.roster[msg.sender].verify(sig, bytes(draft.hash)):
                node.countersigs[turn] = sig
        elif kind == "vote-call":
            call, subject, deadline, opener = msg.payload
            self.receive_vote_call(node, call, subject, deadline, opener)
        elif kind == "ballot":
            call, yes = msg.payload
            vote = node.votes.get(call)
            if vote is not None:
                try:
                    cast_ballot(vote, self.roster[msg.sender], yes, self.tick)
                except (DoubleBallot, VoteClosed):
                    return
                self.settle_vote(node, call)

    # votes

    def receive_vote_call(self, node: SimNode, call: Hash32, subject: Hash32, deadline: int, opener: int) -> None:
        if call in node.votes:
            return
        round_ticks = self.config.nodes * self.schedule.period
        node.votes[call] = open_vote(
            call, Question.INVALIDATE_TX, bytes(subject), self.tick, round_ticks, self.config.theta, self.roster[opener], deadline
        )
        node.vote_subjects[call] = subject
        if node.byzantine:
            yes = self.nodes[opener].byzantine
        else:
            tx = node.chain.get_tx(subject)
            if tx is None:
                return  # cannot judge; stays silent
            yes = not tx.verify()
        cast_ballot(node.votes[call], node.node, yes, self.tick)
        self.broadcast(node.idx, Message("ballot", node.idx, (call, yes)))
        self.settle_vote(node, call)

    def settle_vote(self, node: SimNode, call: Hash32) -> None:
        vote = node.votes[call]
        if call in node.settled:
            return
        out = tally(vote, self.roster, self.tick)
        if not out.decided:
            return
        node.settled.add(call)
        subject = node.vote_subjects[call]
        if node.idx == self.first_honest():
            self.metrics.votes.append((call.hex()[:16], out.passed, out.yes, out.no, out.silent))
        self.log(node.idx, "vote-passed" if out.passed else "vote-failed", call.hex())
        if out.passed and subject in node.chain.tx_index:
            self.set_chain(node, node.chain.with_invalidated({subject}))
            tx = node.chain.get_tx(subject)
            author = self.roster.index(tx.author)
            if not node.byzantine and not self.nodes[author].byzantine:
                self.invalidated_honest.add(subject)

    def first_honest(self) -> int:
        return next((n.idx for n in self.nodes if not n.byzantine), 0)

    # leader behaviour

    def data_transactions(self, node: SimNode, turn: int, variant: str = "") -> list[Transaction]:
        ident = node.identity
        txs = [make_transaction(ident, TransactionKind.PAYLOAD, f"{ident.node.label}:{turn}{variant}".encode())]
        committed = {tx.id for _, tx in node.chain.transactions()}
        still = []
        for tx, seed in node.bloat_seeds:
            if tx.id in committed:
                txs.append(bloat_reveal_transaction(ident, tx, seed, node.rng))
            else:
                still.append((tx, seed))
        node.bloat_seeds = still
        count = self.config.bloat_cover
        if "flood-bloat" in node.behaviors:
            count = 40
        for _ in range(count):
            tx, seed = make_bloat(ident, 1024, TransactionKind.BLOAT, node.rng)
            txs.append(tx)
            node.bloat_seeds.append((tx, seed))
        return txs

    def leader_step(self, node: SimNode, st: Leader, lt: int) -> None:
        T = self.config.transition
        turn = st.turn
        window = self.schedule_window(node, turn)
        if lt >= window.start and lt < st.turn_end - T and (turn, "data") not in node.done:
            node.done.add((turn, "data"))
            self.propose(node, turn, lt, st)
        if lt >= st.turn_end - T and (turn, "request") not in node.done:
            node.done.add((turn, "request"))
            successor = self.schedule.leader_of_turn(turn + 1)
            try:
                draft = node.machine.prepare_handover(node.identity, successor, st.turn_end - 1)
            except TurnError:
                return
            node.handover_drafts[turn] = draft
            self.send(node.idx, self.roster.index(successor), Message("countersign-request", node.idx, draft))
        if lt >= st.turn_end - 1 and (turn, "seal") not in node.done:
            node.done.add((turn, "seal"))
            self.seal(node, turn, st.turn_end - 1)

    def schedule_window(self, node: SimNode, turn: int):
        return timeline_for(self.schedule, node.chain).window_of_turn(turn)

    def propose(self, node: SimNode, turn: int, lt: int, st: Leader) -> None:
        if "vote-no" in node.behaviors:
            self.open_invalidation(node)
        if "late-block" in node.behaviors:
            block = build_block(node.chain, node.identity, BlockKind.DATA, self.data_transactions(node, turn), turn, st.turn_end + 1)
            self.log(node.idx, "late", block.hash.hex())
            self.broadcast(node.idx, Message("block", node.idx, block))
            return
        try:
            block = node.machine.propose_block(node.identity, self.data_transactions(node, turn), lt)
        except TurnError:
            return
        self.metrics.data_blocks += 1
        self.on_appended(node, block)
        self.log(node.idx, "data", block.hash.hex())
        if "equivocate" in node.behaviors:
            base = Chain(node.chain.blocks[:-1], min(node.chain.fixed_upto, node.chain.height), node.chain.invalidated)
            twin = build_block(base, node.identity, BlockKind.DATA, self.data_transactions(node, turn, "'"), turn, lt)
            node.store[twin.hash] = twin
            others = [i for i in range(len(self.nodes)) if i != node.idx]
            half = len(others) // 2
            self.log(node.idx, "equivocate", twin.hash.hex())
            for i in others[:half]:
                self.send(node.idx, i, Message("block", node.idx, block))
            for i in others[half:]:
                self.send(node.idx, i, Message("block", node.idx, twin))
            return
        self.push_block(node.idx, block)

    def seal(self, node: SimNode, turn: int, when: int) -> None:
        sig = node.countersigs.get(turn)
        draft = node.handover_drafts.get(turn)
        block = None
        if sig is not None and draft is not None and draft.prev_hash == link_hash(node.chain.tip):
            successor = self.schedule.leader_of_turn(turn + 1)
            try:
                block = node.machine.handover(node.identity, successor, when, counter_signature=sig)
                self.metrics.handovers += 1
                kind = "handover"
            except TurnError:
                block = None
        if block is None:
            try:
                block = node.machine.finalize_turn(node.identity, when)
            except TurnError:
                return
            self.metrics.finalizings += 1
            kind = "finalize"
        self.log(node.idx, kind, block.hash.hex())
        self.on_appended(node, block)
        if self.config.peering == "pull":
            return
        self.broadcast(node.idx, Message("block", node.idx, block))

    def open_invalidation(self, node: SimNode) -> None:
        target = None
        for b in reversed(node.chain.blocks):
            if b.kind != BlockKind.DATA:
                continue
            author = self.roster.index(b.author)
            if self.nodes[author].byzantine:
                continue
            if node.tracker.blocks.get(b.hash) and node.tracker.status(b.hash) is Status.PENDING:
                target = next((tx for tx in b.transactions if tx.kind == TransactionKind.PAYLOAD), None)
            break
        if target is None or target.id in node.chain.invalidated:
            return
        call = Hash32.of(b"invalidate", bytes(target.id), node.node.public_key)
        deadline = self.tick + self.config.nodes * self.schedule.period
        self.log(node.idx, "vote-open", call.hex())
        payload = (call, target.id, deadline, node.idx)
        self.receive_vote_call(node, *payload)
        self.broadcast(node.idx, Message("vote-call", node.idx, payload))

    # periodic work

    def pull_step(self, node: SimNode, lt: int) -> None:
        if self.config.peering == "push" or self.tick < node.next_pull:
            return
        st = current_leader(lt, self.schedule, node.chain)
        target = st.node if isinstance(st, Leader) else getattr(st, "next", None)
        if target is None:
            return
        x = self.schedule.turn_index(node.node, target)
        node.next_pull = self.tick + max(1, int(pull_interval(x, self.config.turn, n=self.config.nodes)))
        if target != node.node:
            self.send(node.idx, self.roster.index(target), Message("pull", node.idx, node.chain.tip_hash))

    def turn_boundary(self, node: SimNode, lt: int, st) -> None:
        """Once per turn: storage sample and the missed-turn counter."""
        prev = st.turn - 1 if isinstance(st, Leader) else st.turn - (0 if isinstance(st, Transition) else 1)
        if prev < 0 or prev <= node.last_checked_turn:
            return
        node.last_checked_turn = prev
        if any(b.turn_index == prev and b.kind != BlockKind.GENESIS for b in node.chain.blocks[1:]):
            node.missed_streak = 0
        else:
            node.missed_streak += 1
            if node.missed_streak >= self.config.reset_after and not node.byzantine:
                node.missed_streak = 0
                if node.idx == self.first_honest():
                    self.metrics.resets += 1
                self.log(node.idx, "reset", str(prev))
        if node.idx == self.first_honest():
            self.sample_storage(node)

    def sample_storage(self, node: SimNode) -> None:
        chain = node.chain
        txs = sum(len(b.transactions) for b in chain.blocks)
        total = chain.total_size()
        self.metrics.storage.append((self.tick, node.idx, txs, "none", total))
        mode = self.config.storage
        if mode == "none":
            return

        def final(b: Block) -> bool:
            e = node.tracker.blocks.get(b.hash)
            return e is not None and e.status is Status.EFFECTIVE_FINAL

        if mode in ("prune", "child"):
            _, _, removed = prune_plan(chain, final)
            gone = set(removed)
            size = sum(tx.declared_size for _, tx in chain.transactions() if tx.id not in gone)
        else:
            size = meta_size(chain, final)
        self.metrics.storage.append((self.tick, node.idx, txs, mode, size))

    # main loop

    def run(self) -> tuple[Trace, Metrics]:
        c = self.config
        pending = list(self.events)
        self.log(None, "start", f"n={c.nodes} seed={c.seed}")
        for tick in range(c.horizon):
            self.tick = tick
            while pending and pending[0].at <= tick:
                self.apply_fault(pending.pop(0))
            while self.queue and self.queue[0][0] <= tick:
                _, _, dst, msg = heapq.heappop(self.queue)
                self.deliver(dst, msg)
            states = {}
            for node in self.nodes:
                lt = tick + node.skew
                if node.down(tick) or lt < 0:
                    continue
                states[node.idx] = (lt, node.machine.state(lt))
            self.count_leaders(states)
            for node in self.nodes:
                if node.idx not in states or node.down(tick):
                    continue
                lt, st = states[node.idx]
                if isinstance(st, Leader) and st.node == node.node:
                    self.leader_step(node, st, lt)
                self.pull_step(node, lt)
                if not isinstance(st, Leader) or st.node != node.node or (st.turn, "data") in node.done:
                    self.turn_boundary(node, lt, st)
            for node in self.nodes:
                for call in list(node.votes):
                    if node.votes[call].result is None and tick >= node.votes[call].deadline:
                        self.settle_vote(node, call)
        self.finish()
        return self.trace, self.metrics

    def count_leaders(self, states: dict[int, tuple[int, Any]]) -> None:
        """Dual-leader check at the start of the tick, before anyone acts."""
        leading = sum(
            1 for i, (_, st) in states.items() if isinstance(st, Leader) and st.node == self.nodes[i].node
        )
        if leading > 1:
            self.metrics.dual_leader_ticks += 1
            self.log(None, "dual-leader", str(leading))

    def finish(self) -> None:
        honest = [n for n in self.nodes if not n.byzantine]
        finals: dict[int, set[Hash32]] = {}
        for node in honest:
            for h, entry in node.tracker.blocks.items():
                if entry.status is Status.EFFECTIVE_FINAL:
                    block = node.store.get(h)
                    if block is not None:
                        finals.setdefault(block.height, set()).add(h)
        self.metrics.conflicts = sum(1 for hs in finals.values() if len(hs) > 1)
        self.metrics.forced_invalidations = len(self.invalidated_honest)
        ref = honest[0] if honest else self.nodes[0]
        turns = {b.turn_index for b in ref.chain.blocks[1:]}
        last = max(turns, default=-1)
        self.metrics.turns_observed = len(turns)
        self.metrics.missed_turns = sum(1 for t in range(last + 1) if t not in turns)
        self.log(None, "end", f"forks={self.metrics.forks} conflicts={self.metrics.conflicts}")


def meta_size(chain: Chain, final=None) -> int:
    """Bytes kept after the deepest admissible meta-state cut."""
    reveals = RevealIndex.of(chain)
    cut = 0
    for pos, block in enumerate(chain.blocks):
        if pos == 0:
            continue
        if final is not None and not final(block):
            break
        hidden = any(tx.kind in COMMIT_KINDS and tx.id not in reveals.opened for tx in block.transactions)
        if hidden:
            break
        cut = pos
    if cut == 0:
        return chain.total_size()
    head = Chain(chain.blocks[: cut + 1], 0, chain.invalidated)
    snapshot = len(_encode_state(replay_state(head)))
    rest = sum(tx.declared_size for b in chain.blocks[cut + 1:] for tx in b.transactions)
    return snapshot + rest


def run(config: SimConfig, events: Iterable[FaultEvent] | None = None) -> tuple[Trace, Metrics]:
    """Run one simulation; identical inputs give identical traces."""
    return Simulation(config, events).run()


def _write_rows(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export(metrics: Metrics, out_dir: str | Path) -> list[Path]:
    """One CSV per metric family plus a JSON summary; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "cf_latency": out / "cf_latency.csv",
        "messages": out / "messages.csv",
        "storage": out / "storage.csv",
        "votes": out / "votes.csv",
        "forks": out / "forks.csv",
        "summary": out / "summary.json",
    }
    _write_rows(paths["cf_latency"], ["block", "node", "ticks"], metrics.cf_latency)
    _write_rows(paths["messages"], ["kind", "count"], sorted(metrics.messages.items()))
    series: dict[str, list[tuple[int, Any]]] = {}
    for _, _, txs, mode, size in metrics.storage:
        series.setdefault(mode, []).append((txs, Fraction(size) / MB))
    write_series_csv(series, paths["storage"])
    _write_rows(paths["votes"], ["call", "passed", "yes", "no", "silent"], metrics.votes)
    _write_rows(paths["forks"], ["index", "resolution"], enumerate(metrics.fork_resolutions))
    paths["summary"].write_text(json.dumps(metrics.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return list(paths.values())
