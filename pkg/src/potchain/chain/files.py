"""Chain snapshot files and the genesis configuration file."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .codec import DecodeError, Reader, lp, lp_str, u16, u64
from .crypto import ZERO_HASH, Hash32, Identity, NodeId
from .model import Block, BlockKind, Chain

MAGIC = b"POTC"
SNAPSHOT_VERSION = 1
GENESIS_AUTHOR = NodeId(bytes(32), "genesis")


def encode_snapshot(chain: Chain) -> bytes:
    """Layout: magic, u16 version, u64 fixed_upto, invalidated ids, blocks.

    Each block is stored as a length-prefixed canonical encoding.
    """
    parts = [MAGIC, u16(SNAPSHOT_VERSION), u64(chain.fixed_upto), u64(len(chain.invalidated))]
    parts.extend(bytes(i) for i in sorted(chain.invalidated))
    parts.append(u64(len(chain.blocks)))
    parts.extend(lp(block.encode()) for block in chain.blocks)
    return b"".join(parts)


def decode_snapshot(data: bytes) -> Chain:
    """Decode without validating; run ``validate_chain`` on the result."""
    if data[:4] != MAGIC:
        raise DecodeError("not a chain snapshot (bad magic)")
    r = Reader(data, 4)
    version = r.u16()
    if version != SNAPSHOT_VERSION:
        raise DecodeError(f"unsupported snapshot version {version}")
    fixed = r.u64()
    invalid = frozenset(Hash32(r.raw(32)) for _ in range(r.u64()))
    blocks = []
    for _ in range(r.u64()):
        inner = Reader(r.lp())
        blocks.append(Block.decode(inner))
        if not inner.at_end():
            raise DecodeError("trailing bytes inside block record")
    if not r.at_end():
        raise DecodeError("trailing bytes after last block")
    return Chain(tuple(blocks), fixed, invalid)


def write_snapshot(chain: Chain, path: str | Path) -> None:
    Path(path).write_bytes(encode_snapshot(chain))


def read_snapshot(path: str | Path) -> Chain:
    return decode_snapshot(Path(path).read_bytes())


@dataclass(frozen=True)
class GenesisConfig:
    network_id: str
    roster: tuple[NodeId, ...]
    turn_duration: int
    transition_duration: int = 5
    extra: dict[str, str] = field(default_factory=dict, compare=False)

    def canonical_bytes(self) -> bytes:
        parts = [
            lp_str(self.network_id),
            u64(self.turn_duration),
            u64(self.transition_duration),
            u64(len(self.roster)),
        ]
        for node in self.roster:
            parts.append(lp(node.public_key))
            parts.append(lp_str(node.label))
        return b"".join(parts)

    def genesis_block(self) -> Block:
        """The predetermined genesis. Its prev_hash commits to the configuration."""
        return Block(
            height=0,
            prev_hash=Hash32.of(self.canonical_bytes()),
            author=GENESIS_AUTHOR,
            turn_index=0,
            logical_time=0,
            kind=BlockKind.GENESIS,
        )

    def genesis_hash(self) -> Hash32:
        return self.genesis_block().hash

    def to_text(self) -> str:
        lines = [
            f"network_id={self.network_id}",
            f"turn_duration={self.turn_duration}",
            f"transition_duration={self.transition_duration}",
        ]
        for i, node in enumerate(self.roster):
            lines.append(f"node.{i}={node.label}:{node.public_key.hex()}")
        for key in sorted(self.extra):
            lines.append(f"{key}={self.extra[key]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GenesisConfig":
        values: dict[str, str] = {}
        nodes: dict[int, NodeId] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("node."):
                label, _, hexkey = value.partition(":")
                nodes[int(key[5:])] = NodeId(bytes.fromhex(hexkey), label)
            else:
                values[key] = value
        try:
            network_id = values.pop("network_id")
            turn = int(values.pop("turn_duration"))
        except KeyError as exc:
            raise ValueError(f"genesis config lacks {exc.args[0]}") from None
        transition = int(values.pop("transition_duration", "5"))
        roster = tuple(nodes[i] for i in sorted(nodes))
        return cls(network_id, roster, turn, transition, values)

    @classmethod
    def load(cls, path: str | Path) -> "GenesisConfig":
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def deterministic_roster(n: int, seed: int = 0, prefix: str = "n") -> list[Identity]:
    """Reproducible identities for tests and simulations."""
    return [Identity.from_seed(f"{seed}/{prefix}{i}".encode(), f"{prefix}{i}") for i in range(n)]


__all__ = [
    "GENESIS_AUTHOR",
    "GenesisConfig",
    "MAGIC",
    "SNAPSHOT_VERSION",
    "ZERO_HASH",
    "decode_snapshot",
    "deterministic_roster",
    "encode_snapshot",
    "read_snapshot",
    "write_snapshot",
]
