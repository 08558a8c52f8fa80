"""Multi-party card shuffling with layered encryption and claim chains.

Party A creates one X25519 key pair per card. Party B shuffles the plain
deck and encrypts the card at each output position to one of A's public
keys, prefixing the hash of that key (the tag). Every later party shuffles
again and wraps each entry with a fresh symmetric key per output position.
The last party's output is the published pile.

Drawing walks back through the layers: each party releases a layer key
only when the presented entry and index match its own records. The tag
surfacing under the innermost symmetric layer tells A which private key
to release.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from ..chain import NodeId
from .commitments import ContractError, Dispute, decrypt_once, encrypt_once

TAG_SIZE = 32
KEY_SIZE = 32


class TooFewParties(ContractError):
    pass


class RoleCollision(ContractError):
    pass


class InvalidClaim(ContractError):
    pass


class AlreadyDrawn(ContractError):
    pass


class BadRelease(ContractError):
    """A party released a key that does not open its own layer."""

    def __init__(self, party: NodeId) -> None:
        super().__init__(f"{party} released a key that does not decrypt its layer")
        self.blamed = party
        self.dispute = Dispute("bad-release", party)


def key_tag(public_key: bytes) -> bytes:
    return hashlib.sha256(b"deck-tag" + public_key).digest()


def _raw_public(priv: X25519PrivateKey) -> bytes:
    return priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def _ecies_key(shared: bytes, ephemeral: bytes, recipient: bytes) -> bytes:
    return hashlib.sha256(b"deck-ecies" + shared + ephemeral + recipient).digest()


@dataclass
class KeyholderSecrets:
    party: NodeId
    private_keys: list[bytes]
    public_keys: list[bytes]

    def key_index(self, tag: bytes) -> int | None:
        for i, pk in enumerate(self.public_keys):
            if key_tag(pk) == tag:
                return i
        return None


@dataclass
class ShufflerSecrets:
    party: NodeId
    permutation: list[int]  # output position j holds input entry permutation[j]
    outputs: list[bytes]
    layer_keys: list[bytes] | None = None  # None for the first shuffler (asymmetric layer)


@dataclass
class DeckCommitment:
    parties: tuple[NodeId, ...]
    card_count: int
    published_pile: tuple[bytes, ...]
    drawn: set[int] = field(default_factory=set)

    @property
    def keyholder(self) -> NodeId:
        return self.parties[0]


@dataclass
class DeckSetup:
    deck: DeckCommitment
    keyholder: KeyholderSecrets
    shufflers: list[ShufflerSecrets]  # B, C, D, ... in order

    def secrets_of(self, party: NodeId):
        if party == self.keyholder.party:
            return self.keyholder
        for s in self.shufflers:
            if s.party == party:
                return s
        raise KeyError(party)


def _rng_bytes(rng: random.Random, n: int) -> bytes:
    return rng.randbytes(n)


def shuffle_deck(
    parties: Sequence[NodeId], source: Sequence[bytes], rng: random.Random | None = None
) -> DeckSetup:
    """Run the full shuffle among ``parties`` (A first) over ``source`` cards.

    Each party's randomness comes from ``rng`` (a system generator by
    default); in a real deployment every party would use its own.
    """
    if len(parties) < 3:
        raise TooFewParties(f"need at least three parties, got {len(parties)}")
    if len(set(parties)) != len(parties):
        raise RoleCollision("every role needs a distinct party")
    rng = rng or random.SystemRandom()
    m = len(source)
    if m == 0:
        raise ValueError("empty deck")

    privs = [X25519PrivateKey.from_private_bytes(_rng_bytes(rng, KEY_SIZE)) for _ in range(m)]
    keyholder = KeyholderSecrets(
        parties[0],
        [p.private_bytes_raw() for p in privs],
        [_raw_public(p) for p in privs],
    )

    perm = list(range(m))
    rng.shuffle(perm)
    eph = X25519PrivateKey.from_private_bytes(_rng_bytes(rng, KEY_SIZE))
    eph_pub = _raw_public(eph)
    first: list[bytes] = []
    for j in range(m):
        pk = keyholder.public_keys[j]
        shared = eph.exchange(X25519PublicKey.from_public_bytes(pk))
        ct = encrypt_once(_ecies_key(shared, eph_pub, pk), bytes(source[perm[j]]))
        first.append(key_tag(pk) + eph_pub + ct)
    shufflers = [ShufflerSecrets(parties[1], perm, first)]

    pile = first
    for party in parties[2:]:
        perm = list(range(m))
        rng.shuffle(perm)
        keys = [_rng_bytes(rng, KEY_SIZE) for _ in range(m)]
        pile = [encrypt_once(keys[j], pile[perm[j]]) for j in range(m)]
        shufflers.append(ShufflerSecrets(party, perm, pile, keys))

    deck = DeckCommitment(tuple(parties), m, tuple(pile))
    return DeckSetup(deck, keyholder, shufflers)


@dataclass(frozen=True)
class Claim:
    party: NodeId
    entry: bytes
    index: int
    released: bytes


@dataclass
class ClaimChain:
    index: int
    claims: list[Claim] = field(default_factory=list)
    tag: bytes | None = None
    card: bytes | None = None


def release_layer(secrets: ShufflerSecrets, entry: bytes | None, index: int | None) -> tuple[bytes, int]:
    """Layer key and source index, only if both presented values match."""
    if entry is None or index is None:
        raise InvalidClaim("a claim needs both the entry and its index")
    if secrets.layer_keys is None:
        raise InvalidClaim(f"{secrets.party} holds no symmetric layer")
    if not 0 <= index < len(secrets.outputs) or secrets.outputs[index] != entry:
        raise InvalidClaim(f"entry does not sit at position {index} of {secrets.party}'s pile")
    return secrets.layer_keys[index], secrets.permutation[index]


def release_private_key(secrets: KeyholderSecrets, ciphertext: bytes | None, tag: bytes | None) -> bytes:
    """A's private key for ``tag`` once the presented ciphertext decrypts under it."""
    if ciphertext is None or tag is None:
        raise InvalidClaim("a claim needs both the ciphertext and the key tag")
    i = secrets.key_index(tag)
    if i is None:
        raise InvalidClaim("unknown key tag")
    try:
        _open_first_layer(secrets.private_keys[i], ciphertext)
    except (InvalidTag, ValueError):
        raise InvalidClaim("ciphertext was not encrypted to the tagged key") from None
    return secrets.private_keys[i]


def _open_first_layer(private_key: bytes, entry_body: bytes) -> bytes:
    eph_pub, ct = entry_body[:KEY_SIZE], entry_body[KEY_SIZE:]
    priv = X25519PrivateKey.from_private_bytes(private_key)
    shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    return decrypt_once(_ecies_key(shared, eph_pub, _raw_public(priv)), ct)


def walk_claim_chain(setup: DeckSetup, index: int, mark_drawn: bool = True) -> ClaimChain:
    """Decrypt the published entry at ``index`` by claiming every layer in turn."""
    deck = setup.deck
    if not 0 <= index < deck.card_count:
        raise InvalidClaim(f"index {index} outside the pile")
    if index in deck.drawn:
        raise AlreadyDrawn(f"card {index} was already drawn")
    chain = ClaimChain(index)
    entry, pos = deck.published_pile[index], index
    for secrets in reversed(setup.shufflers[1:]):
        key, source = release_layer(secrets, entry, pos)
        try:
            inner = decrypt_once(key, entry)
        except InvalidTag:
            raise BadRelease(secrets.party) from None
        chain.claims.append(Claim(secrets.party, entry, pos, key))
        entry, pos = inner, source
    tag, body = entry[:TAG_SIZE], entry[TAG_SIZE:]
    private = release_private_key(setup.keyholder, body, tag)
    chain.claims.append(Claim(setup.keyholder.party, body, pos, private))
    chain.tag = tag
    chain.card = _open_first_layer(private, body)
    if mark_drawn:
        deck.drawn.add(index)
    return chain


def write_audit_file(setup: DeckSetup, path: str | Path) -> None:
    """Escrow every party's secrets (test-only audit trail)."""
    data = {
        "parties": [p.public_key.hex() for p in setup.deck.parties],
        "pile": [e.hex() for e in setup.deck.published_pile],
        "keyholder": {
            "private_keys": [k.hex() for k in setup.keyholder.private_keys],
            "public_keys": [k.hex() for k in setup.keyholder.public_keys],
        },
        "shufflers": [
            {
                "permutation": s.permutation,
                "layer_keys": None if s.layer_keys is None else [k.hex() for k in s.layer_keys],
            }
            for s in setup.shufflers
        ],
    }
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")


def read_audit_file(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
