"""Round-robin turn schedule and the leader timeline derived from a chain.

A turn ``k`` has a writing window followed by a transition window of ``T``
ticks in which nobody writes. Turn numbers are global counters; the roster
position of turn ``k`` is ``(origin.position + k - origin.turn) mod n``.
Blocks carry the global turn number in ``turn_index``.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Union

from ..chain import TRANSITION_KINDS, BlockKind, Chain, NodeId


class ScheduleError(ValueError):
    pass


class EarlyFinalize(str, Enum):
    SHIFT = "shift"  # next turn starts T ticks after the early finalize
    WAIT = "wait"  # next turn waits for its regular slot


@dataclass(frozen=True)
class AdaptivePolicy:
    """Automated reactions to a silent leader and to pause requests."""

    lost_leader_grace: int = 0  # extra ticks granted to a silent leader
    grace_cap: int = 2  # consecutive graced turns per node before plain skipping
    pause_cap: int = 2  # consecutive pause windows one node may request


@dataclass(frozen=True)
class Pause:
    """No writing during [at, at+length); every later boundary shifts by length."""

    at: int
    length: int
    requested_by: NodeId | None = None


@dataclass(frozen=True)
class GraceExtension:
    turn: int
    ticks: int
    node: NodeId | None = None


ScheduleAdjustment = Union[Pause, GraceExtension]


@dataclass(frozen=True)
class Origin:
    turn: int = 0
    tick: int = 0
    position: int = 0


@dataclass(frozen=True)
class TurnSchedule:
    roster: tuple[NodeId, ...]
    turn_duration: int
    transition_duration: int = 5
    overflow_fraction: Fraction = Fraction(1, 5)
    early_finalize: EarlyFinalize = EarlyFinalize.SHIFT
    adaptive: AdaptivePolicy | None = None
    adjustments: tuple[ScheduleAdjustment, ...] = ()
    origin: Origin = Origin()
    retired: frozenset[bytes] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.roster:
            raise ScheduleError("roster must not be empty")
        if self.transition_duration < 1:
            raise ScheduleError("transition duration must be at least 1")
        if not (0 < self.overflow_fraction < 1):
            raise ScheduleError("overflow fraction must lie in (0, 1)")
        if self.turn_duration <= self.transition_duration:
            raise ScheduleError("turn duration must exceed the transition duration")
        if len(set(self.roster)) != len(self.roster):
            raise ScheduleError("duplicate node in roster")
        object.__setattr__(self, "overflow_fraction", Fraction(self.overflow_fraction))

    @property
    def n(self) -> int:
        return len(self.roster)

    @property
    def period(self) -> int:
        """Length of one stiff turn including its transition window."""
        return self.turn_duration + self.transition_duration

    def position_of_turn(self, turn: int) -> int:
        return (self.origin.position + turn - self.origin.turn) % self.n

    def leader_of_turn(self, turn: int) -> NodeId:
        return self.roster[self.position_of_turn(turn)]

    def position(self, node: NodeId) -> int:
        try:
            return self.roster.index(node)
        except ValueError:
            raise ScheduleError(f"{node} is not in the roster") from None

    def with_adjustment(self, adjustment: ScheduleAdjustment) -> "TurnSchedule":
        return replace(self, adjustments=self.adjustments + (adjustment,))

    def turn_index(self, node: NodeId, leader: NodeId) -> int:
        """Signed distance of ``node`` from the current leader.

        Negative values count the turns until ``node`` leads, positive values
        count the turns since it led, capped by the overflow share of the roster.
        """
        r = (self.position(node) - self.position(leader)) % self.n
        back = self.n - r
        if r and back <= self.overflow_fraction * self.n:
            return back
        return -r


@dataclass(frozen=True)
class Leader:
    node: NodeId
    turn: int
    turn_end: int


@dataclass(frozen=True)
class Transition:
    prev: NodeId
    next: NodeId
    until: int
    turn: int  # the turn that just ended


@dataclass(frozen=True)
class Paused:
    leader: NodeId
    until: int
    turn: int


LeaderState = Union[Leader, Transition, Paused]


@dataclass(frozen=True)
class TurnWindow:
    turn: int
    leader: NodeId
    start: int
    stiff_end: int  # regular end of the writing window (including grace)
    write_end: int  # actual end (earlier when finalized early)
    next_start: int
    finalized_early: bool
    graced: bool
    pauses: tuple[tuple[int, int], ...] = ()


class _ChainMarks:
    """Per-turn facts extracted from a chain once."""

    def __init__(self, chain: Chain) -> None:
        self.first_leader_block: dict[int, int] = {}
        self.transition: dict[int, int] = {}
        for block in chain.blocks:
            if block.kind in (BlockKind.GENESIS, BlockKind.META_STATE_GENESIS):
                continue
            turn = block.turn_index
            if block.kind in TRANSITION_KINDS:
                prev = self.transition.get(turn)
                if prev is None or block.logical_time < prev:
                    self.transition[turn] = block.logical_time
            prev = self.first_leader_block.get(turn)
            if prev is None or block.logical_time < prev:
                self.first_leader_block[turn] = block.logical_time


class Timeline:
    """Turn windows of a schedule as implied by a chain, computed lazily."""

    def __init__(self, schedule: TurnSchedule, chain: Chain | None) -> None:
        self.schedule = schedule
        self.marks = _ChainMarks(chain) if chain is not None else None
        self.windows: list[TurnWindow] = []
        self._starts: list[int] = []
        self._grace_streak: dict[NodeId, int] = {}
        self._pauses = sorted(
            (a for a in schedule.adjustments if isinstance(a, Pause)), key=lambda p: p.at
        )
        self._extensions: dict[int, int] = {}
        for a in schedule.adjustments:
            if isinstance(a, GraceExtension):
                self._extensions[a.turn] = self._extensions.get(a.turn, 0) + a.ticks

    def _apply_pauses(self, lo: int, hi: int, inclusive: bool) -> tuple[int, list[tuple[int, int]]]:
        """Extend ``hi`` by every pause starting inside [lo, hi)."""
        hit: list[tuple[int, int]] = []
        for p in self._pauses:
            if p.at < lo:
                continue
            if p.at < hi or (inclusive and p.at == hi):
                hit.append((p.at, p.length))
                hi += p.length
        return hi, hit

    def _next_window(self) -> TurnWindow:
        s = self.schedule
        if self.windows:
            turn = self.windows[-1].turn + 1
            start = self.windows[-1].next_start
        else:
            turn, start = s.origin.turn, s.origin.tick
        leader = s.leader_of_turn(turn)
        stiff_end = start + s.turn_duration + self._extensions.get(turn, 0)
        stiff_end, pauses = self._apply_pauses(start, stiff_end, False)
        graced = False
        marks = self.marks
        if s.adaptive is not None and s.adaptive.lost_leader_grace > 0:
            first = marks.first_leader_block.get(turn) if marks else None
            silent = first is None or first >= stiff_end
            if silent:
                streak = self._grace_streak.get(leader, 0)
                if streak < s.adaptive.grace_cap:
                    stiff_end += s.adaptive.lost_leader_grace
                    graced = True
                    self._grace_streak[leader] = streak + 1
            else:
                self._grace_streak[leader] = 0
        write_end = stiff_end
        early = False
        fin = marks.transition.get(turn) if marks else None
        if fin is not None and fin < stiff_end:
            write_end = max(fin, start)
            early = True
        if early and s.early_finalize == EarlyFinalize.SHIFT:
            base = write_end
        else:
            base = stiff_end
        next_start, more = self._apply_pauses(base, base + s.transition_duration, False)
        return TurnWindow(
            turn, leader, start, stiff_end, write_end, next_start, early, graced, tuple(pauses + more)
        )

    def window_at(self, now: int) -> TurnWindow:
        """The turn whose [start, next_start) interval contains ``now``."""
        if now < self.schedule.origin.tick:
            raise ScheduleError("tick precedes the schedule origin")
        while not self.windows or self.windows[-1].next_start <= now:
            w = self._next_window()
            self.windows.append(w)
            self._starts.append(w.start)
        return self.windows[bisect_right(self._starts, now) - 1]

    def window_of_turn(self, turn: int) -> TurnWindow:
        first = self.schedule.origin.turn
        if turn < first:
            raise ScheduleError("turn precedes the schedule origin")
        while len(self.windows) <= turn - first:
            w = self._next_window()
            self.windows.append(w)
            self._starts.append(w.start)
        return self.windows[turn - first]

    def state_at(self, now: int) -> LeaderState:
        w = self.window_at(now)
        for at, length in w.pauses:
            if at <= now < at + length:
                return Paused(w.leader, at + length, w.turn)
        if now < w.write_end:
            return Leader(w.leader, w.turn, w.write_end)
        return Transition(w.leader, self.schedule.leader_of_turn(w.turn + 1), w.next_start, w.turn)


_CACHE: dict[tuple[int, bytes], Timeline] = {}
_CACHE_LIMIT = 256


def timeline_for(schedule: TurnSchedule, log: Chain | None) -> Timeline:
    key = (id(schedule), bytes(log.tip_hash) if log is not None else b"", len(log) if log is not None else 0)
    tl = _CACHE.get(key)
    if tl is None or tl.schedule is not schedule:
        if len(_CACHE) >= _CACHE_LIMIT:
            _CACHE.clear()
        tl = Timeline(schedule, log)
        _CACHE[key] = tl
    return tl


def current_leader(now: int, schedule: TurnSchedule, log: Chain | None = None) -> LeaderState:
    """Leader, transition or pause state at tick ``now``.

    Early Finalizing/Handover blocks in ``log`` move later turns forward
    (or not, under ``EarlyFinalize.WAIT``).
    """
    return timeline_for(schedule, log).state_at(now)


def turn_at(now: int, schedule: TurnSchedule, log: Chain | None = None) -> int:
    return timeline_for(schedule, log).window_at(now).turn
