"""The six pile/draw combinations.

=====  ============  ============
case   pile          draw
=====  ============  ============
1      private       open
2      private       private
3      private       hidden
4      public        open
5      public        private
6      public        hidden
=====  ============  ============
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..chain import Hash32, Identity, Transaction
from ..chain.codec import lp, u64
from .commitments import CommitMode, Commitment, ContractError, Mismatch, Secret, commit, game_hash, make_bloat
from .deck import AlreadyDrawn, ClaimChain, DeckSetup, InvalidClaim, walk_claim_chain
from .randomness import generator

__all__ = [
    "AlreadyDrawn",
    "DrawResult",
    "HelperRequired",
    "InvalidClaim",
    "Pile",
    "PrivatePile",
    "draw",
    "pick_index",
    "verify_private_draw",
]


class HelperRequired(ContractError):
    """Public pile with hidden draw: not solvable without an outside helper."""


@dataclass
class Pile:
    """Cards in an order everybody knows."""

    cards: list[bytes]


@dataclass
class PrivatePile:
    """A pile whose order only its owner knows, committed at setup."""

    owner: Identity
    cards: list[bytes]
    commitment: Hash32 = field(init=False)
    salt: bytes = b""
    taken: set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.commitment = game_hash(pile_bytes(self.cards), self.salt)


def pile_bytes(cards: list[bytes]) -> bytes:
    return u64(len(cards)) + b"".join(lp(c) for c in cards)


@dataclass
class DrawResult:
    case: int
    index: int | None
    card: bytes | None = None  # known to the actor; public only for open draws
    broadcast: bool = False
    commitment: Commitment | None = None
    transaction: Transaction | None = None
    secret: Secret | None = None
    cover: list[Transaction] = field(default_factory=list)
    claim_chain: ClaimChain | None = None


def pick_index(seed: int, size: int) -> int:
    return generator(seed) % size


def draw(
    case: int,
    actor: Identity,
    *,
    pile: Pile | PrivatePile | None = None,
    deck: DeckSetup | None = None,
    seed: int | None = None,
    index: int | None = None,
    deadline: int = 0,
    fake_sessions: int = 2,
    rng: random.Random | None = None,
) -> DrawResult:
    """Draw one card according to ``case``.

    Cases 1, 2, 3 and 4 pick the index from a randomization seed. Case 5
    draws ``index`` from a shuffled deck through a claim chain. Case 3
    covers the randomization call with ``fake_sessions`` bloat commitments
    so observers cannot tell which session produced a draw.
    """
    if case == 6:
        raise HelperRequired("a hidden draw from a public pile cannot be solved without external help")
    if case == 5:
        if deck is None or index is None:
            raise ValueError("case 5 needs a deck and an index")
        if index in deck.deck.drawn:
            raise AlreadyDrawn(f"card {index} was already drawn")
        chain = walk_claim_chain(deck, index)
        return DrawResult(5, index, chain.card, broadcast=True, claim_chain=chain)
    if seed is None:
        raise ValueError(f"case {case} needs a randomization seed")
    if case in (1, 4):
        if pile is None or not pile.cards:
            raise ValueError("nothing to draw from")
        i = pick_index(seed, len(pile.cards))
        if isinstance(pile, PrivatePile):
            card = pile.cards[i]
            pile.taken.add(i)
        else:
            card = pile.cards.pop(i)
        return DrawResult(case, i, card, broadcast=True)
    if case in (2, 3):
        if not isinstance(pile, PrivatePile):
            raise ValueError(f"case {case} draws from a private pile")
        if pile.owner.node != actor.node:
            raise ContractError("only the owner draws from a private pile")
        free = [i for i in range(len(pile.cards)) if i not in pile.taken]
        if not free:
            raise ValueError("private pile exhausted")
        i = free[pick_index(seed, len(free))]
        pile.taken.add(i)
        card = pile.cards[i]
        c, tx, secret = commit(actor, u64(i) + lp(card), CommitMode.GAME_HASH, deadline, rng=rng)
        res = DrawResult(case, i, card, broadcast=False, commitment=c, transaction=tx, secret=secret)
        if case == 3:
            res.index = None
            res.cover = [make_bloat(actor, len(tx.body), tx.kind, rng)[0] for _ in range(fake_sessions)]
        return res
    raise ValueError(f"unknown draw case {case}")


def verify_private_draw(pile: PrivatePile | Hash32, pile_cards: list[bytes], salt: bytes, seed_index: int, result: DrawResult) -> bool:
    """End-of-game check of a private draw: the pile opens, the card sits at the index."""
    digest = pile.commitment if isinstance(pile, PrivatePile) else pile
    if game_hash(pile_bytes(pile_cards), salt) != digest:
        raise Mismatch("pile does not match its commitment", result.commitment.owner if result.commitment else None)
    if result.secret is None or result.secret.data is None:
        raise Mismatch("draw not revealed", None)
    expected = u64(seed_index) + lp(pile_cards[seed_index])
    return result.secret.data == expected
