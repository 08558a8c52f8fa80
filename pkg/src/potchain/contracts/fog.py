"""Numeric fog of war: published values blurred by a committed random value."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..chain import NodeId
from .commitments import ContractError, Dispute


class OutOfBand(ContractError):
    def __init__(self, message: str, blamed: NodeId | None = None) -> None:
        super().__init__(message)
        self.blamed = blamed
        self.dispute = Dispute("fog-out-of-band", blamed, detail=message)


@dataclass(frozen=True)
class FogPolicy:
    band_percent: int

    def __post_init__(self) -> None:
        if not 0 <= self.band_percent <= 100:
            raise ValueError("band must be a percentage in [0, 100]")

    def bounds(self, value: int) -> tuple[Fraction, Fraction]:
        x = Fraction(self.band_percent, 100)
        a, b = value * (1 - x), value * (1 + x)
        return min(a, b), max(a, b)

    def span(self, value: int) -> int:
        return abs(value) * self.band_percent // 100


@dataclass(frozen=True)
class FogReport:
    published: int
    deviation: int


def deviation_for(value: int, policy: FogPolicy, random_value: int) -> int:
    """Symmetric integer deviation in ``[-span, span]`` from the session output."""
    span = policy.span(value)
    return random_value % (2 * span + 1) - span


def fog_report(true_value: int, policy: FogPolicy, random_value: int) -> FogReport:
    d = deviation_for(true_value, policy, random_value)
    return FogReport(true_value + d, d)


def in_band(published: int, true_value: int, policy: FogPolicy) -> bool:
    lo, hi = policy.bounds(true_value)
    return lo <= published <= hi


def accept_fog_report(
    published: int,
    true_value: int,
    policy: FogPolicy,
    random_value: int | None = None,
    emitter: NodeId | None = None,
) -> None:
    """Validate a report once the true value (and optionally the random value) is revealed."""
    if not in_band(published, true_value, policy):
        raise OutOfBand(f"{published} outside the band around {true_value}", emitter)
    if random_value is not None and published != fog_report(true_value, policy, random_value).published:
        raise OutOfBand("deviation does not follow from the committed random value", emitter)
