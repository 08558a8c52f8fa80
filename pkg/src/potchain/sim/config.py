"""Simulation configuration and the scenario file grammar.

Config files are flat ``key = value`` lines (``#`` starts a comment).
Scenario files hold one fault per line::

    AT <tick> PARTITION a,b|c,d
    AT <tick> HEAL
    AT <tick> CRASH <node>
    AT <tick> RECOVER <node>
    AT <tick> SILENCE <node> <duration>
    AT <tick> BYZANTINE <node> <equivocate|late-block|flood-bloat|vote-no>
    AT <tick> SKEW <node> <offset>

Nodes are roster positions (0-based).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping


class ConfigInvalid(ValueError):
    pass


PEERING_MODES = ("pull", "push", "mixed")
STORAGE_MODES = ("none", "prune", "child", "meta")
BEHAVIORS = ("equivocate", "late-block", "flood-bloat", "vote-no")


@dataclass(frozen=True)
class SimConfig:
    nodes: int = 8
    turn: int = 20
    transition: int = 5
    seed: int = 0
    latency: int = 2  # maximum per-link delay in ticks; links draw 1..latency
    peering: str = "push"
    theta: Fraction = Fraction(1, 2)
    storage: str = "none"
    scenario: str | None = None
    rounds: int = 3
    byzantine: Fraction = Fraction(0)  # weight of nodes picked as Byzantine at start
    behaviors: tuple[str, ...] = ("equivocate", "vote-no")
    grace: int = 0  # lost-leader grace in ticks (0 disables)
    grace_cap: int = 2
    reset_after: int = 3  # consecutive missed turns before a reset vote
    skew_node: int | None = None
    skew: int = 0
    bloat_cover: int = 1  # bloat transactions per data block

    def validate(self) -> "SimConfig":
        if self.nodes < 2:
            raise ConfigInvalid("need at least two nodes")
        if self.transition < 1 or self.turn <= self.transition:
            raise ConfigInvalid("need turn > transition >= 1")
        if not 1 <= self.latency or 2 * self.latency > self.transition:
            raise ConfigInvalid("latency must be at least 1 and a round trip must fit in the transition time")
        if self.peering not in PEERING_MODES:
            raise ConfigInvalid(f"peering must be one of {PEERING_MODES}")
        if self.storage not in STORAGE_MODES:
            raise ConfigInvalid(f"storage must be one of {STORAGE_MODES}")
        if not 0 < self.theta <= 1:
            raise ConfigInvalid("theta must lie in (0, 1]")
        if not 0 <= self.byzantine <= 1:
            raise ConfigInvalid("byzantine weight must lie in [0, 1]")
        bad = [b for b in self.behaviors if b not in BEHAVIORS]
        if bad:
            raise ConfigInvalid(f"unknown behavior {bad[0]}")
        if self.rounds < 1:
            raise ConfigInvalid("rounds must be positive")
        if self.skew_node is not None and not 0 <= self.skew_node < self.nodes:
            raise ConfigInvalid("skew_node outside the roster")
        return self

    @property
    def horizon(self) -> int:
        return self.rounds * self.nodes * (self.turn + self.transition)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw: Any) -> Any:
    if raw is None:
        return None
    if name in ("theta", "byzantine"):
        return Fraction(str(raw))
    if name == "behaviors":
        if isinstance(raw, (tuple, list)):
            return tuple(raw)
        return tuple(x.strip() for x in str(raw).split(",") if x.strip())
    if name in ("peering", "storage", "scenario"):
        return str(raw)
    if name == "skew_node":
        return None if str(raw).lower() in ("", "none") else int(raw)
    return int(raw)


KEYS = {f.name for f in fields(SimConfig)}


def parse_config_text(text: str) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(*layers: Mapping[str, Any]) -> SimConfig:
    """Merge layers left to right (later wins) over the defaults."""
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    try:
        values = {k: _coerce(k, v) for k, v in merged.items()}
        return SimConfig(**values).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(str(exc)) from None


def load_config(path: str | Path, **overrides: Any) -> SimConfig:
    return build_config(parse_config_text(Path(path).read_text(encoding="utf-8")), overrides)


@dataclass(frozen=True)
class FaultEvent:
    at: int
    kind: str
    nodes: tuple[int, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()
    value: int = 0
    behavior: str = ""

    def describe(self) -> str:
        if self.kind == "partition":
            return "PARTITION " + "|".join(",".join(map(str, g)) for g in self.groups)
        parts = [self.kind.upper()] + [str(n) for n in self.nodes]
        if self.kind in ("silence", "skew"):
            parts.append(str(self.value))
        if self.behavior:
            parts.append(self.behavior)
        return " ".join(parts)


def parse_scenario(text: str) -> list[FaultEvent]:
    events: list[tuple[int, int, FaultEvent]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if words[0].upper() != "AT" or len(words) < 3:
                raise ValueError("expected AT <tick> <EVENT>")
            at = int(words[1])
            kind = words[2].upper()
            args = words[3:]
            if kind == "PARTITION":
                groups = tuple(tuple(int(x) for x in g.split(",") if x) for g in "".join(args).split("|"))
                ev = FaultEvent(at, "partition", groups=groups)
            elif kind == "HEAL":
                ev = FaultEvent(at, "heal")
            elif kind in ("CRASH", "RECOVER"):
                ev = FaultEvent(at, kind.lower(), (int(args[0]),))
            elif kind in ("SILENCE", "SKEW"):
                ev = FaultEvent(at, kind.lower(), (int(args[0]),), value=int(args[1]))
            elif kind == "BYZANTINE":
                if args[1] not in BEHAVIORS:
                    raise ValueError(f"unknown behavior {args[1]}")
                ev = FaultEvent(at, "byzantine", (int(args[0]),), behavior=args[1])
            else:
                raise ValueError(f"unknown event {kind}")
        except (IndexError, ValueError) as exc:
            raise ConfigInvalid(f"scenario line {lineno}: {exc}") from None
        if at < 0:
            raise ConfigInvalid(f"scenario line {lineno}: negative tick")
        events.append((at, len(events), ev))
    return [ev for _, _, ev in sorted(events, key=lambda e: (e[0], e[1]))]


def load_scenario(path: str | Path) -> list[FaultEvent]:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def format_scenario(events: list[FaultEvent]) -> str:
    return "".join(f"AT {ev.at} {ev.describe()}\n" for ev in events)


def with_overrides(config: SimConfig, **changes: Any) -> SimConfig:
    return replace(config, **changes).validate()
