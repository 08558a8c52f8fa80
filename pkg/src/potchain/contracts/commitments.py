"""Offset revealing: hidden commitments, bloat cover and their reveals.

Transaction body schemas (all self-delimiting, so padding is harmless):

* HiddenGameHash: the 32-byte digest ``SHA-256(data || salt)``.
* HiddenEncrypted: length-prefixed ciphertext (ChaCha20-Poly1305, fresh key).
* Bloat: filler expanded from a secret seed.
* RevealPreimage / RevealKey: target commitment id (32 bytes), u64 flags,
  then two length-prefixed fields. Flag bit 0 marks a bloat reveal, in
  which case the first field is the bloat seed.
"""

from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass, field
from enum import Enum

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from ..chain import Hash32, Identity, NodeId, Transaction, TransactionKind, make_transaction
from ..chain.codec import DecodeError, Reader, lp, u64

NONCE = b"\x00" * 12  # every key encrypts exactly one message
BLOAT_FLAG = 1
HIDDEN_KINDS = frozenset({TransactionKind.HIDDEN_ENCRYPTED, TransactionKind.HIDDEN_GAME_HASH})
COMMIT_KINDS = HIDDEN_KINDS | {TransactionKind.BLOAT}
REVEAL_KINDS = frozenset({TransactionKind.REVEAL_KEY, TransactionKind.REVEAL_PREIMAGE})


class ContractError(Exception):
    pass


@dataclass(frozen=True)
class Dispute:
    kind: str
    accused: NodeId | None
    subject: bytes = b""
    detail: str = ""
    opened_by: NodeId | None = None


class Mismatch(ContractError):
    """A reveal does not open its commitment; the emitter is blamed."""

    def __init__(self, message: str, blamed: NodeId | None, dispute: Dispute | None = None) -> None:
        super().__init__(message)
        self.blamed = blamed
        self.dispute = dispute or Dispute("mismatch", blamed, detail=message)


class DeadlineExceeded(ContractError):
    def __init__(self, message: str, blamed: NodeId | None) -> None:
        super().__init__(message)
        self.blamed = blamed


class AlreadyRevealed(ContractError):
    pass


class CommitMode(str, Enum):
    ENCRYPTED = "encrypted"
    GAME_HASH = "game-hash"


def _randbytes(rng: random.Random | None, n: int) -> bytes:
    return rng.randbytes(n) if rng is not None else os.urandom(n)


def game_hash(data: bytes, salt: bytes = b"") -> Hash32:
    return Hash32.of(lp(data), lp(salt))


def encrypt_once(key: bytes, data: bytes) -> bytes:
    return ChaCha20Poly1305(key).encrypt(NONCE, data, None)


def decrypt_once(key: bytes, ciphertext: bytes) -> bytes:
    return ChaCha20Poly1305(key).decrypt(NONCE, ciphertext, None)


def bloat_filler(seed: bytes, size: int) -> bytes:
    return hashlib.shake_256(b"bloat" + seed).digest(size)


@dataclass(frozen=True)
class Commitment:
    mode: CommitMode
    owner: NodeId
    created_turn: int
    reveal_deadline: int
    tx_id: Hash32
    digest: Hash32 | None = None
    ciphertext: bytes | None = None
    salt_present: bool = False

    @property
    def size(self) -> int:
        """On-chain payload footprint of the commitment itself."""
        if self.mode is CommitMode.GAME_HASH:
            return 32
        return len(self.ciphertext or b"")


@dataclass(frozen=True)
class Secret:
    """Opening material: (data, salt) for game hashes, key for ciphertexts."""

    data: bytes | None = None
    salt: bytes = b""
    key: bytes | None = None


@dataclass(frozen=True)
class RevealedData:
    commitment_id: Hash32
    owner: NodeId
    data: bytes
    bloat: bool = False


def commit(
    owner: Identity,
    data: bytes,
    mode: CommitMode,
    deadline: int,
    created_turn: int = 0,
    salt: bytes | None = None,
    rng: random.Random | None = None,
    pad_to: int | None = None,
) -> tuple[Commitment, Transaction, Secret]:
    """Create a hidden commitment transaction and the secret that opens it.

    ``salt=None`` draws a fresh 16-byte salt; pass ``b""`` for an unsalted
    commitment. ``deadline`` is a turn number.
    """
    if mode is CommitMode.GAME_HASH:
        salt = _randbytes(rng, 16) if salt is None else salt
        digest = game_hash(data, salt)
        tx = make_transaction(owner, TransactionKind.HIDDEN_GAME_HASH, bytes(digest), pad_to, rng)
        c = Commitment(mode, owner.node, created_turn, deadline, tx.id, digest=digest, salt_present=bool(salt))
        return c, tx, Secret(data=data, salt=salt)
    key = _randbytes(rng, 32)
    salt = _randbytes(rng, 16) if salt is None else salt
    ciphertext = encrypt_once(key, lp(salt) + data)
    tx = make_transaction(owner, TransactionKind.HIDDEN_ENCRYPTED, lp(ciphertext), pad_to, rng)
    c = Commitment(mode, owner.node, created_turn, deadline, tx.id, ciphertext=ciphertext, salt_present=bool(salt))
    return c, tx, Secret(key=key)


def commitment_from_tx(tx: Transaction, created_turn: int = 0, deadline: int = 0) -> Commitment:
    if tx.kind == TransactionKind.HIDDEN_GAME_HASH:
        return Commitment(CommitMode.GAME_HASH, tx.author, created_turn, deadline, tx.id, digest=Hash32(tx.body[:32]))
    if tx.kind == TransactionKind.HIDDEN_ENCRYPTED:
        return Commitment(CommitMode.ENCRYPTED, tx.author, created_turn, deadline, tx.id, ciphertext=Reader(tx.body).lp())
    raise ContractError(f"{tx.kind.name} is not a hidden commitment")


def open_commitment(c: Commitment, secret: Secret) -> bytes:
    if c.mode is CommitMode.GAME_HASH:
        if secret.data is None or game_hash(secret.data, secret.salt) != c.digest:
            raise Mismatch("preimage does not match the game hash", c.owner)
        return secret.data
    if secret.key is None:
        raise Mismatch("no key supplied", c.owner)
    try:
        plain = decrypt_once(secret.key, c.ciphertext or b"")
        r = Reader(plain)
        r.lp()
        return plain[r.pos:]
    except (InvalidTag, DecodeError, ValueError):
        raise Mismatch("key does not decrypt the commitment", c.owner) from None


@dataclass
class CommitmentRegistry:
    """Tracks which commitments were opened (each at most once)."""

    revealed: dict[Hash32, RevealedData] = field(default_factory=dict)

    def mark(self, data: RevealedData) -> None:
        if data.commitment_id in self.revealed:
            raise AlreadyRevealed(f"commitment {data.commitment_id.short()} already revealed")
        self.revealed[data.commitment_id] = data


def reveal(
    c: Commitment,
    secret: Secret,
    now_turn: int | None = None,
    registry: CommitmentRegistry | None = None,
) -> RevealedData:
    if now_turn is not None and now_turn > c.reveal_deadline:
        raise DeadlineExceeded(
            f"reveal at turn {now_turn} after deadline {c.reveal_deadline}", c.owner
        )
    data = RevealedData(c.tx_id, c.owner, open_commitment(c, secret))
    if registry is not None:
        registry.mark(data)
    return data


def make_bloat(
    owner: Identity,
    size: int,
    disguise: TransactionKind = TransactionKind.BLOAT,
    rng: random.Random | None = None,
) -> tuple[Transaction, bytes]:
    """Cover transaction of exactly ``size`` bytes and the seed proving it is bloat.

    With ``disguise`` set to a hidden kind the body has the same shape as a
    real commitment of that kind.
    """
    seed = _randbytes(rng, 16)
    if disguise == TransactionKind.HIDDEN_GAME_HASH:
        body = bytes(Hash32.of(b"bloat", seed))
    elif disguise == TransactionKind.HIDDEN_ENCRYPTED:
        inner = max(0, size - 8)
        body = lp(bloat_filler(seed, inner))
    else:
        body = bloat_filler(seed, size)
    tx = make_transaction(owner, disguise, body, size if len(body) < size else None, rng)
    return tx, seed


def reveal_body(target: Hash32, first: bytes, second: bytes = b"", bloat: bool = False) -> bytes:
    return bytes(target) + u64(BLOAT_FLAG if bloat else 0) + lp(first) + lp(second)


def parse_reveal(tx: Transaction) -> tuple[Hash32, bool, bytes, bytes]:
    r = Reader(tx.body)
    target = Hash32(r.raw(32))
    flags = r.u64()
    return target, bool(flags & BLOAT_FLAG), r.lp(), r.lp()


def reveal_transaction(owner: Identity, c: Commitment, secret: Secret, rng: random.Random | None = None) -> Transaction:
    if c.mode is CommitMode.GAME_HASH:
        return make_transaction(owner, TransactionKind.REVEAL_PREIMAGE, reveal_body(c.tx_id, secret.data or b"", secret.salt), rng=rng)
    return make_transaction(owner, TransactionKind.REVEAL_KEY, reveal_body(c.tx_id, secret.key or b""), rng=rng)


def bloat_reveal_transaction(owner: Identity, bloat_tx: Transaction, seed: bytes, rng: random.Random | None = None) -> Transaction:
    kind = TransactionKind.REVEAL_PREIMAGE if bloat_tx.kind == TransactionKind.HIDDEN_GAME_HASH else TransactionKind.REVEAL_KEY
    return make_transaction(owner, kind, reveal_body(bloat_tx.id, seed, bloat=True), rng=rng)


def verify_reveal(commit_tx: Transaction, reveal_tx: Transaction) -> RevealedData:
    """Check a reveal transaction against its commitment transaction."""
    if reveal_tx.kind not in REVEAL_KINDS:
        raise ContractError(f"{reveal_tx.kind.name} is not a reveal")
    target, is_bloat, first, second = parse_reveal(reveal_tx)
    if target != commit_tx.id:
        raise Mismatch("reveal targets another commitment", reveal_tx.author)
    if reveal_tx.author != commit_tx.author:
        raise Mismatch("reveal not issued by the commitment owner", reveal_tx.author)
    if is_bloat:
        if not _bloat_matches(commit_tx, first):
            raise Mismatch("bloat seed does not reproduce the body", commit_tx.author)
        return RevealedData(commit_tx.id, commit_tx.author, b"", bloat=True)
    if commit_tx.kind not in HIDDEN_KINDS:
        raise Mismatch("only hidden commitments carry data", commit_tx.author)
    c = commitment_from_tx(commit_tx)
    secret = Secret(data=first, salt=second) if c.mode is CommitMode.GAME_HASH else Secret(key=first)
    return RevealedData(commit_tx.id, commit_tx.author, open_commitment(c, secret))


def _bloat_matches(tx: Transaction, seed: bytes) -> bool:
    if tx.kind == TransactionKind.HIDDEN_GAME_HASH:
        return tx.body[:32] == bytes(Hash32.of(b"bloat", seed))
    if tx.kind == TransactionKind.HIDDEN_ENCRYPTED:
        inner = Reader(tx.body).lp()
        return inner == bloat_filler(seed, len(inner))
    if tx.kind == TransactionKind.BLOAT:
        body = tx.body
        return body == bloat_filler(seed, len(body))
    return False
