"""Hashing and node identities (SHA-256 digests, Ed25519 signatures)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)


class Hash32(bytes):
    """A 32-byte digest."""

    def __new__(cls, value: bytes) -> "Hash32":
        if len(value) != 32:
            raise ValueError(f"Hash32 needs 32 bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def of(cls, *parts: bytes) -> "Hash32":
        h = hashlib.sha256()
        for part in parts:
            h.update(part)
        return cls(h.digest())

    @classmethod
    def from_hex(cls, text: str) -> "Hash32":
        return cls(bytes.fromhex(text))

    def short(self) -> str:
        return self.hex()[:12]

    def __repr__(self) -> str:
        return f"Hash32({self.hex()[:16]}...)"


ZERO_HASH = Hash32(b"\x00" * 32)


@lru_cache(maxsize=4096)
def _public_key(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


@lru_cache(maxsize=1 << 16)
def _verify(public_key: bytes, signature: bytes, message: bytes) -> bool:
    # pure function of its inputs; replicas re-verify the same blocks many times
    try:
        _public_key(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True, order=True)
class NodeId:
    """Public identity of a node. Ordering is by public key bytes."""

    public_key: bytes
    label: str = field(default="", compare=False)

    def verify(self, signature: bytes, message: bytes) -> bool:
        return _verify(self.public_key, bytes(signature), bytes(message))

    def __str__(self) -> str:
        return self.label or self.public_key.hex()[:12]

    def __repr__(self) -> str:
        return f"NodeId({self})"


class Identity:
    """A node's signing key together with its public NodeId."""

    def __init__(self, private_key: Ed25519PrivateKey, label: str = "") -> None:
        self._key = private_key
        raw = private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        self.node = NodeId(raw, label)

    @classmethod
    def generate(cls, label: str = "") -> "Identity":
        return cls(Ed25519PrivateKey.generate(), label)

    @classmethod
    def from_seed(cls, seed: bytes, label: str = "") -> "Identity":
        """Deterministic identity; the 32-byte key is the SHA-256 of the seed."""
        return cls(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest()), label)

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)

    def private_bytes(self) -> bytes:
        return self._key.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        )

    @property
    def label(self) -> str:
        return self.node.label

    def __repr__(self) -> str:
        return f"Identity({self.node})"
