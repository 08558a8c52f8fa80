"""Chain compaction: transaction classes, prune, child chains and meta-state cuts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Sequence

from ..chain import (
    Block,
    BlockKind,
    Chain,
    Hash32,
    Identity,
    NodeId,
    Transaction,
    TransactionKind,
    link_hash,
    make_transaction,
    validate_chain,
)
from ..chain.codec import Reader, lp, u64
from ..contracts.commitments import COMMIT_KINDS, REVEAL_KINDS, Mismatch, parse_reveal, verify_reveal
from ..consensus.voting import Outcome


class CompactionError(Exception):
    pass


class InvalidPrune(CompactionError):
    pass


class NotDesignated(CompactionError):
    pass


class ChildFullRace(CompactionError):
    pass


class UnrevealedBeforeCut(CompactionError):
    pass


class VoteFailed(CompactionError):
    pass


class TxClass(str, Enum):
    RELEVANT_HIDDEN = "relevant-hidden"
    RELEVANT_REVEALED = "relevant-revealed"
    RELEVANT_HISTORIC = "relevant-historic"
    BLOAT_UNREVEALED = "bloat-unrevealed"
    BLOAT_REVEALED = "bloat-revealed"
    META = "meta"


@dataclass
class RevealIndex:
    """Which commitments a chain opens, and how."""

    opened: dict[Hash32, Transaction] = field(default_factory=dict)  # commitment id -> reveal tx
    bloat: set[Hash32] = field(default_factory=set)  # commitment ids revealed as bloat
    reveal_targets: dict[Hash32, Hash32] = field(default_factory=dict)  # reveal id -> commitment id

    @classmethod
    def of(cls, chain: Chain) -> "RevealIndex":
        idx = cls()
        for _, tx in chain.transactions():
            if tx.kind not in REVEAL_KINDS:
                continue
            target, is_bloat, _, _ = parse_reveal(tx)
            commit_tx = chain.get_tx(target)
            if commit_tx is None or target in idx.opened:
                continue
            try:
                verify_reveal(commit_tx, tx)
            except Mismatch:
                continue
            idx.opened[target] = tx
            idx.reveal_targets[tx.id] = target
            if is_bloat:
                idx.bloat.add(target)
        return idx


def classify(tx: Transaction, chain: Chain, reveals: RevealIndex | None = None, block: Block | None = None) -> TxClass:
    reveals = reveals or RevealIndex.of(chain)
    if block is None:
        loc = chain.tx_index.get(tx.id)
        block = chain.blocks[loc[0]] if loc else None
    if block is not None and block.kind == BlockKind.META_STATE_GENESIS:
        return TxClass.META
    if tx.kind in COMMIT_KINDS:
        if tx.id in reveals.bloat:
            return TxClass.BLOAT_REVEALED
        if tx.id in reveals.opened:
            cls = TxClass.RELEVANT_REVEALED
        elif tx.kind == TransactionKind.BLOAT:
            return TxClass.BLOAT_UNREVEALED
        else:
            return TxClass.RELEVANT_HIDDEN
    elif tx.id in reveals.reveal_targets:
        if reveals.reveal_targets[tx.id] in reveals.bloat:
            return TxClass.BLOAT_REVEALED
        cls = TxClass.RELEVANT_REVEALED
    elif tx.kind in REVEAL_KINDS:
        return TxClass.RELEVANT_HIDDEN  # reveal of an unknown or invalid commitment; nothing to delete
    else:
        cls = TxClass.RELEVANT_REVEALED
    if block is not None and block.height < chain.fixed_upto:
        return TxClass.RELEVANT_HISTORIC
    return cls


def untidy_size(chain: Chain) -> int:
    return sum(tx.declared_size for b, tx in chain.transactions() if b.height >= chain.fixed_upto)


def designated_gcn(chain: Chain, cap: int) -> NodeId | None:
    """Author of the block whose append pushed the untidy region over ``cap`` bytes."""
    total = 0
    for block in chain.blocks:
        if block.height < chain.fixed_upto:
            continue
        total += sum(tx.declared_size for tx in block.transactions)
        if total > cap:
            return block.author
    return None


@dataclass(frozen=True)
class PruneProof:
    source_tip: Hash32
    gcn: NodeId
    removed: tuple[Hash32, ...]
    transcribed: tuple[Hash32, ...]
    kept: tuple[Hash32, ...]
    fixed_upto: int


FinalPredicate = Callable[[Block], bool]


def _plan(chain: Chain, is_final: FinalPredicate | None) -> tuple[list[Block], list[Transaction], list[Transaction], list[Hash32]]:
    reveals = RevealIndex.of(chain)
    prefix = [b for b in chain.blocks if b.height < chain.fixed_upto or b is chain.blocks[0]]
    untidy = chain.blocks[len(prefix):]
    final_ids: set[Hash32] = set()
    for b in untidy:
        if is_final is None or is_final(b):
            final_ids.update(tx.id for tx in b.transactions)
    transcribe: list[Transaction] = []
    keep: list[Transaction] = []
    removed: list[Hash32] = []
    for b in untidy:
        for tx in b.transactions:
            cls = classify(tx, chain, reveals, b)
            if cls is TxClass.BLOAT_REVEALED:
                commit_id = tx.id if tx.kind in COMMIT_KINDS else reveals.reveal_targets[tx.id]
                if commit_id in final_ids and reveals.opened[commit_id].id in final_ids:
                    removed.append(tx.id)
                    continue
                keep.append(tx)
            elif cls in (TxClass.RELEVANT_REVEALED, TxClass.RELEVANT_HISTORIC) and tx.id in final_ids:
                transcribe.append(tx)
            else:
                keep.append(tx)
    return prefix, transcribe, keep, removed


def prune_plan(chain: Chain, is_final: FinalPredicate | None = None) -> tuple[list[Transaction], list[Transaction], list[Hash32]]:
    """(transcribed, kept, removed ids) a prune of ``chain`` would produce."""
    _, transcribe, keep, removed = _plan(chain, is_final)
    return transcribe, keep, removed


def _gcn_block(prev: Block, height: int, gcn: Identity, txs: Sequence[Transaction], like: Block) -> Block:
    block = Block(height, link_hash(prev), gcn.node, like.turn_index, like.logical_time, BlockKind.DATA, tuple(txs))
    return block.signed_by(gcn)


def prune(
    chain: Chain,
    gcn: Identity,
    designated: NodeId | None = None,
    is_final: FinalPredicate | None = None,
) -> tuple[Chain, PruneProof]:
    """Delete revealed bloat from the untidy region.

    The relevant revealed transactions are transcribed into one block signed
    by the garbage collecting node; each keeps its original signature. What
    is still hidden follows in a second block. The fixed marker moves past
    the transcription block. Only content of blocks accepted by ``is_final``
    is ever deleted or transcribed.
    """
    if designated is not None and gcn.node != designated:
        raise NotDesignated(f"{gcn.node} is not the designated garbage collector {designated}")
    prefix, transcribe, keep, removed = _plan(chain, is_final)
    if not removed:
        return chain, PruneProof(chain.tip_hash, gcn.node, (), (), (), chain.fixed_upto)
    blocks = list(prefix)
    like = chain.tip
    fixed = chain.fixed_upto
    for group, moves_marker in ((transcribe, True), (keep, False)):
        if not group:
            continue
        prev = blocks[-1]
        blocks.append(_gcn_block(prev, prev.height + 1, gcn, group, like))
        if moves_marker:
            fixed = max(fixed, prev.height + 2)
    present = {tx.id for b in blocks for tx in b.transactions}
    out = Chain(tuple(blocks), fixed, frozenset(i for i in chain.invalidated if i in present))
    proof = PruneProof(
        chain.tip_hash,
        gcn.node,
        tuple(removed),
        tuple(tx.id for tx in transcribe),
        tuple(tx.id for tx in keep),
        fixed,
    )
    return out, proof


def verify_prune(original: Chain, pruned: Chain, proof: PruneProof, is_final: FinalPredicate | None = None) -> None:
    """Independent re-verification; raises InvalidPrune on any discrepancy."""
    if proof.source_tip != original.tip_hash:
        raise InvalidPrune("proof refers to another chain")
    prefix, transcribe, keep, removed = _plan(original, is_final)
    if not removed:
        if pruned != original:
            raise InvalidPrune("nothing to prune but the chain changed")
        return
    if list(proof.removed) != removed:
        raise InvalidPrune("removed set differs from the recomputation")
    report = validate_chain(pruned)
    if not report.ok:
        raise InvalidPrune(f"pruned chain does not validate: {report.findings[0]}")
    if pruned.fixed_upto < original.fixed_upto:
        raise InvalidPrune("fixed marker moved backwards")
    if tuple(pruned.blocks[: len(prefix)]) != tuple(prefix):
        raise InvalidPrune("fixed prefix altered")
    rebuilt = [tx for b in pruned.blocks[len(prefix):] for tx in b.transactions]
    expected = transcribe + keep
    if [tx.id for tx in rebuilt] != [tx.id for tx in expected]:
        raise InvalidPrune("transcribed transactions differ from the recomputation")
    for tx, orig in zip(rebuilt, expected):
        if tx != orig or not tx.verify():
            raise InvalidPrune(f"transaction {tx.id.short()} altered")
    for b in pruned.blocks[len(prefix):]:
        if b.author != proof.gcn:
            raise InvalidPrune("rewritten block not signed by the garbage collector")


def coordinated_prune(
    chain: Chain,
    candidates: Sequence[Identity],
    compute: Callable[[Chain, Identity], tuple[Chain, PruneProof]] | None = None,
    is_final: FinalPredicate | None = None,
) -> tuple[Chain, PruneProof, NodeId]:
    """Let candidates compute in order until a result passes verification.

    When a later candidate succeeds, the earlier (failed) ones verify its
    result too, which is what ``verify_prune`` does for every node.
    """
    compute = compute or (lambda c, g: prune(c, g, is_final=is_final))
    last: Exception | None = None
    for gcn in candidates:
        out, proof = compute(chain, gcn)
        try:
            verify_prune(chain, out, proof, is_final)
        except InvalidPrune as exc:
            last = exc
            continue
        return out, proof, gcn.node
    raise InvalidPrune(f"no candidate produced a valid prune: {last}")


class ChildState(str, Enum):
    OPEN = "open"
    FULL = "full"
    DELETABLE = "deletable"
    DELETED = "deleted"


@dataclass
class ChildChain:
    id: int
    capacity: float
    entries: dict[Hash32, float] = field(default_factory=dict)  # commitment id -> size
    keys: dict[Hash32, bytes] = field(default_factory=dict)
    obsolete: set[Hash32] = field(default_factory=set)
    full: bool = False
    deleted: bool = False
    used: float = 0

    @property
    def state(self) -> ChildState:
        if self.deleted:
            return ChildState.DELETED
        if not self.full:
            return ChildState.OPEN
        if all(e in self.keys or e in self.obsolete for e in self.entries):
            return ChildState.DELETABLE
        return ChildState.FULL

    def append(self, tx_id: Hash32, size) -> None:
        if self.full or self.used + size > self.capacity:
            self.full = True
            raise ChildFullRace(f"child {self.id} is full")
        self.entries[tx_id] = size
        self.used += size
        if self.used == self.capacity:
            self.full = True


@dataclass
class ChildChainManager:
    """Routes hidden transactions to size-limited child chains.

    Sizes may be ints or Fractions, as long as they share a unit with
    ``capacity``.
    """

    capacity: float
    children: list[ChildChain] = field(default_factory=list)
    main_residues: list[Transaction] = field(default_factory=list)
    location: dict[Hash32, int] = field(default_factory=dict)

    def open_child(self) -> ChildChain:
        child = ChildChain(len(self.children) + 1, self.capacity)
        self.children.append(child)
        return child

    def current(self) -> ChildChain:
        if not self.children or self.children[-1].full:
            return self.open_child()
        return self.children[-1]

    def route_to_child(self, tx_id: Hash32, size) -> int:
        if size > self.capacity:
            raise ValueError("transaction larger than a child chain")
        child = self.current()
        try:
            child.append(tx_id, size)
        except ChildFullRace:
            child = self.open_child()
            child.append(tx_id, size)
        self.location[tx_id] = child.id
        return child.id

    def reveal_on_child(self, commitment: Hash32, key: bytes, residue: Transaction | None = None) -> None:
        child = self.children[self.location[commitment] - 1]
        if child.deleted:
            raise CompactionError(f"child {child.id} was already deleted")
        child.keys[commitment] = key
        if residue is not None:
            self.main_residues.append(residue)

    def mark_obsolete(self, commitment: Hash32) -> None:
        self.children[self.location[commitment] - 1].obsolete.add(commitment)

    def gc_children(self, keep: bool = False) -> dict[int, ChildState]:
        """Delete deletable children locally unless the node chooses to ``keep`` them."""
        if not keep:
            for child in self.children:
                if child.state is ChildState.DELETABLE:
                    child.deleted = True
        return self.states()

    def states(self) -> dict[int, ChildState]:
        return {c.id: c.state for c in self.children}

    def stored(self):
        return sum(c.used for c in self.children if not c.deleted)


def _encode_state(state: Sequence[tuple[str, bytes, bytes]]) -> bytes:
    out = [u64(len(state))]
    for kind, a, b in state:
        out += [lp(kind.encode()), lp(a), lp(b)]
    return b"".join(out)


def _decode_state(data: bytes) -> tuple[tuple[str, bytes, bytes], ...]:
    r = Reader(data)
    return tuple((r.lp().decode(), r.lp(), r.lp()) for _ in range(r.u64()))


SNAPSHOT_MAGIC = b"meta-state"


def replay_state(chain: Chain) -> tuple[tuple[str, bytes, bytes], ...]:
    """Application state as the ordered list of public effects.

    Payloads contribute (author, body); opened commitments contribute
    (commitment id, data). Bloat and invalidated transactions do not count.
    A meta-state genesis contributes its stored snapshot.
    """
    reveals = RevealIndex.of(chain)
    state: list[tuple[str, bytes, bytes]] = []
    for block, tx in chain.transactions():
        if block.kind == BlockKind.META_STATE_GENESIS:
            if tx.body.startswith(SNAPSHOT_MAGIC):
                state.extend(_decode_snapshot(tx.body)[0])
            continue
        if tx.id in chain.invalidated:
            continue
        if tx.kind == TransactionKind.PAYLOAD:
            state.append(("payload", tx.author.public_key, tx.body))
        elif tx.id in reveals.reveal_targets:
            target = reveals.reveal_targets[tx.id]
            if target in reveals.bloat or target in chain.invalidated:
                continue
            data = verify_reveal(chain.get_tx(target), tx).data
            state.append(("reveal", bytes(target), data))
    return tuple(state)


def _encode_snapshot(state, tail: Sequence[Block]) -> bytes:
    return SNAPSHOT_MAGIC + lp(_encode_state(state)) + u64(len(tail)) + b"".join(lp(b.encode()) for b in tail)


def _decode_snapshot(body: bytes):
    r = Reader(body, len(SNAPSHOT_MAGIC))
    state = _decode_state(r.lp())
    tail = [Block.decode(Reader(r.lp())) for _ in range(r.u64())]
    return state, tail


def retained_tail(chain: Chain) -> list[Block]:
    first = chain.blocks[0]
    if first.kind != BlockKind.META_STATE_GENESIS:
        return []
    return _decode_snapshot(first.transactions[0].body)[1]


def meta_state_cut(
    chain: Chain,
    cut_height: int,
    author: Identity,
    vote: Outcome | None,
    tail: int = 2,
) -> Chain:
    """Replace everything up to ``cut_height`` by a meta-state genesis.

    The new genesis stores the replayed state and the last ``tail`` blocks
    before the cut, and carries the cut block's hash so the remaining
    blocks still link to it.
    """
    if cut_height <= 0:
        return chain
    if vote is None or not vote.passed:
        raise VoteFailed("meta-state cut needs a passed vote")
    positions = {b.height: i for i, b in enumerate(chain.blocks)}
    if cut_height not in positions:
        raise CompactionError(f"no block at height {cut_height}")
    pos = positions[cut_height]
    head = Chain(chain.blocks[: pos + 1], min(chain.fixed_upto, cut_height), chain.invalidated)
    reveals = RevealIndex.of(head)
    for block, tx in head.transactions():
        if tx.kind in COMMIT_KINDS and tx.id not in reveals.opened and tx.id not in head.invalidated:
            raise UnrevealedBeforeCut(f"commitment {tx.id.short()} at height {block.height} is still hidden")
    state = replay_state(head)
    cut = chain.blocks[pos]
    kept_tail = [b for b in chain.blocks[max(0, pos - tail + 1): pos + 1] if b.kind != BlockKind.META_STATE_GENESIS]
    snap = make_transaction(author, TransactionKind.PAYLOAD, _encode_snapshot(state, kept_tail))
    genesis = Block(cut.height, cut.hash, author.node, cut.turn_index, cut.logical_time, BlockKind.META_STATE_GENESIS, (snap,))
    genesis = genesis.signed_by(author)
    rest = chain.blocks[pos + 1:]
    present = {tx.id for b in rest for tx in b.transactions}
    return Chain((genesis,) + tuple(rest), max(chain.fixed_upto, cut_height), frozenset(i for i in chain.invalidated if i in present))
