"""Pull-based peering: request intervals, leader guessing and the probe walk."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Protocol, Sequence, Union

from ..chain import TRANSITION_KINDS, Block, Chain, Hash32, NodeId
from ..consensus.schedule import Leader, TurnSchedule, timeline_for


class NetworkLost(Exception):
    """Every roster node was probed and none answered."""


class PullStrategyRejected(ValueError):
    pass


@dataclass(frozen=True)
class PullStrategy:
    """Requests-per-slot as a function of the turn index ``x``.

    Default shape: 0.5 below -15, 2 on [-15, -6], a linear ramp from 2 at -5
    to 5 at 0, and 5 while leading. After its own turn a node either keeps
    pulling at the leading rate ("steady") or falls into a deep sleep with
    one request every ``t * n / 4`` ticks ("deep_sleep").
    """

    far_rate: Fraction = Fraction(1, 2)
    near_rate: Fraction = Fraction(2)
    lead_rate: Fraction = Fraction(5)
    far_bound: int = -15
    ramp_start: int = -5
    post_turn: str = "deep_sleep"
    post_turn_rate: Fraction | None = None  # explicit override, checked by validate()

    def rate(self, x: int | Fraction) -> Fraction:
        x = Fraction(x)
        if x < self.far_bound:
            return self.far_rate
        if x < self.ramp_start:
            return self.near_rate
        if x < 0:
            share = (x - self.ramp_start) / (0 - self.ramp_start)
            return self.near_rate + share * (self.lead_rate - self.near_rate)
        return self.lead_rate

    def interval(self, x: int, t: int, n: int | None = None) -> Fraction:
        if x > 0:
            if self.post_turn_rate is not None:
                if self.post_turn_rate <= 0:
                    raise PullStrategyRejected("a post-turn rate of zero never pulls again")
                return Fraction(t) / self.post_turn_rate
            if self.post_turn == "deep_sleep":
                if n is None:
                    raise ValueError("deep-sleep intervals need the roster size")
                return Fraction(t) * Fraction(n, 4)
        return Fraction(t) / self.rate(x)

    def validate(self, t: int, n: int) -> None:
        """Reject strategies that would let a node drift out of the network.

        Any interval longer than one full round (``t * n``) means the node can
        sleep through its own turn.
        """
        lo = -int(Fraction(4 * n, 5))
        hi = int(Fraction(n, 5))
        for x in range(lo, hi + 1):
            p = self.interval(x, t, n)
            if p <= 0 or p > t * n:
                raise PullStrategyRejected(f"interval {p} at index {x} exceeds one round of {t * n} ticks")


DEFAULT_STRATEGY = PullStrategy()


def index_bounds(n: int) -> tuple[int, int]:
    return -int(Fraction(4 * n, 5)), int(Fraction(n, 5))


def pull_interval(x: int, t: int, strategy: PullStrategy = DEFAULT_STRATEGY, n: int | None = None) -> Fraction:
    """Ticks between two pull requests of a node at turn index ``x``."""
    if n is not None:
        lo, hi = index_bounds(n)
        if not lo <= x <= hi:
            raise ValueError(f"turn index {x} outside [{lo}, {hi}] for n={n}")
    return strategy.interval(x, t, n)


def guess_leader(last_transition_tick: int, last_leader: NodeId, schedule: TurnSchedule, now: int) -> NodeId:
    """Heuristic leader assuming stiff turns since the last known transition.

    ``last_transition_tick`` is the start of ``last_leader``'s turn.
    """
    steps = max(0, now - last_transition_tick) // schedule.period
    pos = (schedule.position(last_leader) + steps) % schedule.n
    return schedule.roster[pos]


def probe_order(schedule: TurnSchedule, guessed: NodeId, me: NodeId) -> list[NodeId]:
    """Guessed leader, then predecessor and successor alternately outward."""
    n = schedule.n
    g = schedule.position(guessed)
    order: list[int] = [g]
    for k in range(1, n):
        for pos in ((g - k) % n, (g + k) % n):
            if pos not in order:
                order.append(pos)
    return [schedule.roster[p] for p in order if schedule.roster[p] != me]


@dataclass(frozen=True)
class UpdateRequest:
    requester: NodeId
    last_known_transition_block: Hash32


@dataclass(frozen=True)
class Referral:
    node: NodeId


@dataclass(frozen=True)
class NoAnswer:
    pass


Response = Union[tuple[Block, ...], Referral, NoAnswer]


class PeerNetwork(Protocol):
    def request(self, target: NodeId, req: UpdateRequest, now: int) -> Response: ...


@dataclass(frozen=True)
class PullView:
    """What a pulling node believes about the schedule."""

    node: NodeId
    schedule: TurnSchedule
    last_transition_tick: int
    last_leader: NodeId
    last_transition_hash: Hash32


@dataclass
class UpdateResult:
    view: PullView
    responder: NodeId | None
    probes: list[NodeId] = field(default_factory=list)
    suffix: tuple[Block, ...] = ()
    skipped: bool = False


def recalibrate(view: PullView, suffix: Sequence[Block]) -> PullView:
    """Move the heuristic anchor to the newest transition block received."""
    newest = None
    for block in suffix:
        if block.kind in TRANSITION_KINDS:
            newest = block
    if newest is None:
        return view
    s = view.schedule
    start = newest.logical_time + s.transition_duration
    return replace(
        view,
        last_transition_tick=start,
        last_leader=s.leader_of_turn(newest.turn_index + 1),
        last_transition_hash=newest.hash,
    )


def pull_once(view: PullView, network: PeerNetwork, now: int) -> UpdateResult:
    guessed = guess_leader(view.last_transition_tick, view.last_leader, view.schedule, now)
    if guessed == view.node:
        return UpdateResult(view, None, skipped=True)
    order = probe_order(view.schedule, guessed, view.node)
    req = UpdateRequest(view.node, view.last_transition_hash)
    probes: list[NodeId] = []
    asked: set[NodeId] = set()
    queue = list(order)
    while queue:
        target = queue.pop(0)
        if target in asked or target == view.node:
            continue
        asked.add(target)
        probes.append(target)
        resp = network.request(target, req, now)
        if isinstance(resp, Referral):
            if resp.node not in asked:
                queue.insert(0, resp.node)
            continue
        if isinstance(resp, NoAnswer):
            continue
        return UpdateResult(recalibrate(view, resp), target, probes, tuple(resp))
    raise NetworkLost(f"{view.node} probed {len(probes)} nodes without an answer")


class StaticNetwork:
    """In-memory responders: each online node answers from its own chain."""

    def __init__(self, chains: dict[NodeId, Chain], online: set[NodeId]) -> None:
        self.chains = chains
        self.online = online
        self.log: list[tuple[int, NodeId, NodeId]] = []

    def request(self, target: NodeId, req: UpdateRequest, now: int) -> Response:
        self.log.append((now, req.requester, target))
        if target not in self.online:
            return NoAnswer()
        chain = self.chains[target]
        pos = chain.block_positions.get(req.last_known_transition_block)
        visible = [b for b in chain.blocks if b.logical_time <= now or b.height == 0]
        if pos is None:
            return tuple(visible)
        return tuple(b for b in visible[pos:])


def wake_ticks(
    schedule: TurnSchedule,
    node: NodeId,
    start: int,
    horizon: int,
    strategy: PullStrategy = DEFAULT_STRATEGY,
    log: Chain | None = None,
) -> list[int]:
    """Pull times of ``node`` following ``strategy`` with full knowledge of ``log``."""
    ticks = []
    now = start
    tl = timeline_for(schedule, log)
    while now < horizon:
        ticks.append(now)
        st = tl.state_at(now)
        leader = st.node if isinstance(st, Leader) else getattr(st, "next", getattr(st, "leader", None))
        x = schedule.turn_index(node, leader)
        now += max(1, int(pull_interval(x, schedule.turn_duration, strategy, schedule.n)))
    return ticks


def turn_awareness(
    schedule: TurnSchedule, log: Chain, node: NodeId, wakes: Sequence[int], turns: int
) -> list[tuple[int, int | None, bool]]:
    """For each of ``node``'s turns among the first ``turns``: (turn, aware tick, missed).

    A node becomes aware of its turn at its first wake inside the turn; the
    turn is missed when no wake falls into the writing window.
    """
    tl = timeline_for(schedule, log)
    out = []
    for k in range(schedule.origin.turn, schedule.origin.turn + turns):
        w = tl.window_of_turn(k)
        if w.leader != node:
            continue
        aware = next((x for x in wakes if w.start <= x < w.write_end), None)
        out.append((k, aware, aware is None))
    return out
