"""How many hostile nodes it takes to cheat a grouped shuffle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union


@dataclass(frozen=True)
class FullMistrust:
    """Every node shuffles; fraud needs all of them."""


@dataclass(frozen=True)
class GroupsOf:
    size: int


@dataclass(frozen=True)
class FixedGroups:
    count: int


Grouping = Union[FullMistrust, GroupsOf, FixedGroups]


def group_sizes(grouping: Grouping, n: int) -> list[int]:
    """Partition ``n`` nodes into shuffle groups; each group acts as one party."""
    if isinstance(grouping, FullMistrust):
        return [1] * n
    if isinstance(grouping, GroupsOf):
        k = grouping.size
        if k < 1:
            raise ValueError("group size must be positive")
        return [k] * (n // k) + ([n % k] if n % k else [])
    g = grouping.count
    if not 1 <= g <= n:
        raise ValueError(f"cannot form {g} groups from {n} nodes")
    return [n // g + (1 if i < n % g else 0) for i in range(g)]


def fraud_resilience(grouping: Grouping, n: int) -> Fraction:
    """Smallest fraction of hostile nodes that can cheat.

    A group's shuffle is compromised by one hostile member, and fraud needs
    every shuffle stage compromised, so the minimum is one node per group.
    Under full mistrust each node is its own group and the answer is 1.
    """
    if n < 3:
        raise ValueError("at least three nodes are needed")
    if isinstance(grouping, GroupsOf):
        return Fraction(math.ceil(n / grouping.size), n)
    return Fraction(len(group_sizes(grouping, n)), n)
