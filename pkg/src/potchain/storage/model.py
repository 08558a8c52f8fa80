"""Storage cost model: break-even between encryption and game hashes, and growth series.

Sizes are in MB with 1 MB = 2**20 bytes. All arithmetic is exact (Fraction).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

MB = 1 << 20


class Degenerate(ValueError):
    """Large and small bloat have the same size; no threshold exists."""


def mb(value) -> Fraction:
    return Fraction(str(value)) if isinstance(value, float) else Fraction(value)


def bytes_to_mb(n) -> Fraction:
    return Fraction(n) / MB


@dataclass(frozen=True)
class StorageParams:
    size_relevant: Fraction = Fraction(1, 1000)  # MB per transaction
    size_bloat_large: Fraction = Fraction(1, 100)  # MB
    size_bloat_small: int = 32  # bytes
    game_hash_size: int = 32  # bytes
    bloat_ratio: Fraction = Fraction(1)  # bloat transactions per relevant one
    child_capacity: Fraction = Fraction(1)  # MB

    def __post_init__(self) -> None:
        for name in ("size_relevant", "size_bloat_large", "size_bloat_small", "game_hash_size", "child_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bloat_ratio < 0:
            raise ValueError("bloat_ratio must be non-negative")


class CommitModeAdvice(str, Enum):
    ENCRYPTED = "encrypted"
    GAME_HASH = "game-hash"


@dataclass(frozen=True)
class ModeAdvice:
    mode: CommitModeAdvice
    threshold: Fraction  # bloat factor from which game hashes are cheaper
    cost_encrypted: Fraction | None = None
    cost_game_hash: Fraction | None = None


def breakeven(params: StorageParams, f: Fraction | int | None = None, relevant_size: Fraction | None = None) -> ModeAdvice:
    """Compare per-move storage of the two commitment modes at bloat factor ``f``.

    Encrypted: ``h + f*BT(l)``. Game hash: ``H + f*BT(s) + h`` (the data is
    published at reveal time). Shared terms cancel, so game hashes win iff
    ``H + f*BT(s) < f*BT(l)``, i.e. for ``f`` above ``H / (BT(l) - BT(s))``.
    When large bloat is smaller than a hash-sized one the threshold is
    negative and encryption is always advised.
    """
    large = params.size_bloat_large
    small = bytes_to_mb(params.size_bloat_small)
    hsize = bytes_to_mb(params.game_hash_size)
    if large == small:
        raise Degenerate("BT(l) equals BT(s)")
    threshold = hsize / (large - small)
    h = params.size_relevant if relevant_size is None else relevant_size
    if f is None:
        mode = CommitModeAdvice.GAME_HASH if large > small else CommitModeAdvice.ENCRYPTED
        return ModeAdvice(mode, threshold)
    f = Fraction(f)
    enc = h + f * large
    gh = hsize + f * small + h
    mode = CommitModeAdvice.GAME_HASH if gh < enc else CommitModeAdvice.ENCRYPTED
    return ModeAdvice(mode, threshold, enc, gh)


@dataclass(frozen=True)
class StorageScenario:
    """Arrival and reveal schedule in transaction counts.

    Every transaction (relevant or bloat) weighs ``tx_size``. A transaction
    is revealed ``reveal_lag`` transactions after it arrived.
    """

    tx_count: int
    tx_size: Fraction = Fraction(1, 1000)
    bloat_ratio: Fraction = Fraction(1)
    reveal_lag: int = 200
    prune_every: int = 1000
    child_capacity: Fraction = Fraction(1)  # MB
    meta_every: int = 10000
    plateau: Fraction = Fraction(2)  # MB: long-term size of the summarized state
    retained_tail: int = 100  # transactions kept before each cut
    step: int = 1000


class SeriesMode(str, Enum):
    NONE = "none"
    HISTORIC = "historic"
    PRUNE = "prune"
    CHILD = "child"
    META = "meta"
    PRUNE_META = "prune+meta"
    CHILD_META = "child+meta"


def relevant_count(c: int, ratio: Fraction) -> int:
    """Relevant transactions among the first ``c``: every (1+ratio)-th one on average."""
    rho = 1 / (1 + Fraction(ratio))
    return math.floor(c * rho) if c > 0 else 0


def bloat_count(c: int, ratio: Fraction) -> int:
    return max(0, c) - relevant_count(c, ratio)


def _prune_tx(c: int, every: int, lag: int, ratio: Fraction, base: int = 0) -> int:
    """Transactions stored after ``base`` when pruning every ``every`` after a lag."""
    k = (c - base - lag) // every if c - base >= lag + every else 0
    deleted_upto = base + k * every
    return c - base - (bloat_count(deleted_upto, ratio) - bloat_count(base, ratio))


def _child_tx(c: int, per_child: int, lag: int, ratio: Fraction, base: int = 0) -> int:
    """Child-chain storage in transactions.

    Child ``j`` holds arrivals ``((j-1)C, jC]`` and is deleted once the last
    of them is revealed (``jC + lag``); residues of its relevant
    transactions then live on the main chain. A residue and its child
    entry are counted once.
    """
    deleted = (c - base - lag) // per_child if c - base >= lag + per_child else 0
    cut = base + deleted * per_child
    residues = relevant_count(cut, ratio) - relevant_count(base, ratio)
    return residues + (c - cut)


def _cut_point(c: int, sc: StorageScenario) -> int:
    """Last transaction summarized by the most recent meta-state cut (0: none yet)."""
    cuts = c // sc.meta_every
    if cuts == 0:
        return 0
    return cuts * sc.meta_every - sc.reveal_lag


def storage_at(c: int, sc: StorageScenario, mode: SeriesMode) -> Fraction:
    s = sc.tx_size
    r = sc.bloat_ratio
    if mode is SeriesMode.NONE:
        return c * s
    if mode is SeriesMode.HISTORIC:
        return relevant_count(max(0, c - sc.reveal_lag), r) * s
    if mode is SeriesMode.PRUNE:
        return _prune_tx(c, sc.prune_every, sc.reveal_lag, r) * s
    if mode is SeriesMode.CHILD:
        per_child = int(sc.child_capacity / s)
        return _child_tx(c, per_child, sc.reveal_lag, r) * s
    q = _cut_point(c, sc)
    if q <= 0:
        inner = {SeriesMode.META: SeriesMode.NONE, SeriesMode.PRUNE_META: SeriesMode.PRUNE, SeriesMode.CHILD_META: SeriesMode.CHILD}[mode]
        return storage_at(c, sc, inner)
    snapshot = min(relevant_count(q, r) * s, sc.plateau)
    tail = min(sc.retained_tail, q) * s
    if mode is SeriesMode.META:
        region = c - q
    elif mode is SeriesMode.PRUNE_META:
        region = _prune_tx(c, sc.prune_every, sc.reveal_lag, r, base=q)
    else:
        region = _child_tx(c, int(sc.child_capacity / s), sc.reveal_lag, r, base=q)
    return snapshot + tail + region * s


def meta_level(sc: StorageScenario) -> Fraction:
    """Size right after each cut once the snapshot reached the plateau."""
    return sc.plateau + (sc.retained_tail + sc.reveal_lag) * sc.tx_size


def checkpoints(sc: StorageScenario) -> list[int]:
    pts = list(range(0, sc.tx_count + 1, sc.step))
    if pts[-1] != sc.tx_count:
        pts.append(sc.tx_count)
    return pts


def storage_series(sc: StorageScenario, mode: SeriesMode | str) -> list[tuple[int, Fraction]]:
    mode = SeriesMode(mode)
    return [(c, storage_at(c, sc, mode)) for c in checkpoints(sc)]


def write_series_csv(series: dict[str, Sequence[tuple[int, Fraction]]], path: str | Path | None = None, out=None) -> None:
    """CSV with columns tx_count, mode, MB (six decimals)."""
    fh = open(path, "w", newline="", encoding="utf-8") if path is not None else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tx_count", "mode", "MB"])
        for mode, points in series.items():
            for c, size in points:
                w.writerow([c, mode, f"{float(size):.6f}"])
    finally:
        if path is not None:
            fh.close()


def read_series_csv(path: str | Path) -> list[tuple[int, str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return [(int(a), b, float(c)) for a, b, c in rows]


def blockchain_size(tx_count: int, games: int = 1, tx_size: Fraction = Fraction(1, 1000)) -> Fraction:
    return tx_count * games * tx_size


def series_modes(names: Iterable[str]) -> list[SeriesMode]:
    return [SeriesMode(n) for n in names]
