"""Push-based peering over the decimal distribution tree.

Indexes count from the leader (index 0) in turn order: index ``i`` is the
node ``i`` positions after the leader. The leader feeds indexes 1..9 and
every other index ``x`` feeds ``10x .. 10x+9``.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..chain import NodeId


def drains(x: int, n: int) -> list[int]:
    if x < 0:
        raise ValueError("index must be non-negative")
    if x == 0:
        return list(range(1, min(10, n)))
    return [d for d in range(10 * x, 10 * x + 10) if d < n]


def source_of(x: int) -> int:
    """Unique feeding index of ``x`` when everyone is online."""
    if x <= 0:
        raise ValueError("the leader has no source")
    return 0 if x < 10 else x // 10


def hops(x: int) -> int:
    """Hops from the leader: the decimal digit count of the index."""
    return 0 if x == 0 else len(str(x))


@dataclass
class DeliveryReport:
    n: int
    reached: dict[int, int] = field(default_factory=dict)  # index -> hop count
    sources: dict[int, int] = field(default_factory=dict)
    deliveries: dict[int, int] = field(default_factory=dict)  # index -> times delivered
    round: int = 0

    @property
    def unreached(self) -> set[int]:
        return set(range(self.n)) - set(self.reached)

    @property
    def max_hops(self) -> int:
        return max(self.reached.values(), default=0)

    def rows(self) -> list[tuple[int, int, int, int]]:
        return [
            (self.round, i, self.reached.get(i, -1), int(i in self.reached)) for i in range(self.n)
        ]


def push_round(
    n: int,
    online: Iterable[int] | None = None,
    jump_pipes: bool = False,
    horizontal_pipes: bool = False,
    round_no: int = 0,
) -> DeliveryReport:
    """Breadth-first push from index 0.

    With jump pipes, a node whose drain is offline pushes straight to that
    drain's own drains (recursively). With horizontal pipes, an online node
    left unreached takes the update from its reached left neighbour on the
    same layer.
    """
    alive = set(range(n)) if online is None else set(online)
    report = DeliveryReport(n, round=round_no)
    if 0 not in alive:
        return report
    report.reached[0] = 0
    report.deliveries[0] = 1
    queue: deque[int] = deque([0])
    while queue:
        x = queue.popleft()
        targets = deque(drains(x, n))
        while targets:
            d = targets.popleft()
            if d in alive:
                report.deliveries[d] = report.deliveries.get(d, 0) + 1
                if d not in report.reached:
                    report.reached[d] = report.reached[x] + 1
                    report.sources[d] = x
                    queue.append(d)
            elif jump_pipes:
                targets.extend(drains(d, n))
    if horizontal_pipes:
        for x in sorted(alive - set(report.reached)):
            left = x - 1
            if left in report.reached and hops(left) == hops(x):
                report.reached[x] = report.reached[left] + 1
                report.sources[x] = left
                report.deliveries[x] = report.deliveries.get(x, 0) + 1
    return report


def index_of(position: int, leader_position: int, n: int) -> int:
    return (position - leader_position) % n


def push_turn(
    n: int, leader_position: int, offline_positions: Iterable[int] = (), jump_pipes: bool = False, round_no: int = 0
) -> DeliveryReport:
    """Push round expressed in roster positions; report keys are indexes."""
    offline = {index_of(p, leader_position, n) for p in offline_positions}
    return push_round(n, set(range(n)) - offline, jump_pipes, round_no=round_no)


@dataclass
class FullPushReport:
    delivered: dict[NodeId, int]  # node -> number of blocks sent to it
    unreachable: list[NodeId]


def full_push(
    leader: NodeId,
    roster: Iterable[NodeId],
    online: Iterable[NodeId],
    known_heights: Mapping[NodeId, int],
    tip_height: int,
) -> FullPushReport:
    """Direct delivery to every roster node; laggards get their missing suffix."""
    alive = set(online)
    delivered: dict[NodeId, int] = {}
    unreachable: list[NodeId] = []
    for node in roster:
        if node == leader:
            continue
        if node not in alive:
            unreachable.append(node)
            continue
        delivered[node] = max(0, tip_height - known_heights.get(node, -1))
    return FullPushReport(delivered, unreachable)


def write_delivery_csv(reports: Iterable[DeliveryReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "index", "hops", "reached"])
        for rep in reports:
            w.writerows(rep.rows())
