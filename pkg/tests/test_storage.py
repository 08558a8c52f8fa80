import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potchain.chain import (
    BlockKind,
    GenesisConfig,
    Hash32,
    TransactionKind,
    append_block,
    build_block,
    deterministic_roster,
    make_transaction,
    new_chain,
    validate_chain,
)
from potchain.consensus.voting import Outcome
from potchain.contracts import CommitMode, bloat_reveal_transaction, commit, make_bloat, reveal_transaction
from potchain.storage import (
    MB,
    ChildChainManager,
    ChildState,
    CommitModeAdvice,
    Degenerate,
    InvalidPrune,
    NotDesignated,
    SeriesMode,
    StorageParams,
    StorageScenario,
    TxClass,
    UnrevealedBeforeCut,
    VoteFailed,
    blockchain_size,
    breakeven,
    classify,
    coordinated_prune,
    designated_gcn,
    meta_level,
    meta_state_cut,
    prune,
    read_series_csv,
    replay_state,
    retained_tail,
    storage_at,
    storage_series,
    untidy_size,
    verify_prune,
    write_series_csv,
)

PASSED = Outcome(True, True, 3, 0, 0, 3)
BLOAT = 64


@pytest.fixture(scope="module")
def crew():
    return deterministic_roster(3, 5)


def base_chain(crew):
    cfg = GenesisConfig("store", tuple(i.node for i in crew), 20, 5)
    return new_chain(cfg.genesis_block())


def add(chain, crew, txs, k):
    author = crew[k % len(crew)]
    return append_block(chain, build_block(chain, author, BlockKind.DATA, txs, k, 25 * k))


def synthetic(crew, relevant=100, revealed_bloat=100, hidden_bloat=20, seed=0):
    """Relevant payloads, revealed bloat pairs and still hidden bloat, in ten blocks."""
    rng = random.Random(seed)
    txs = []
    pending = []
    for k in range(relevant):
        txs.append(make_transaction(crew[k % 3], TransactionKind.PAYLOAD, f"move {k}".encode(), pad_to=BLOAT, rng=rng))
    for k in range(revealed_bloat):
        owner = crew[k % 3]
        tx, s = make_bloat(owner, BLOAT, rng=rng)
        txs.append(tx)
        pending.append(bloat_reveal_transaction(owner, tx, s, rng))
    for k in range(hidden_bloat):
        txs.append(make_bloat(crew[k % 3], BLOAT, rng=rng)[0])
    rng.shuffle(txs)
    chain = base_chain(crew)
    per = len(txs) // 10 + 1
    for k in range(10):
        if txs[k * per:(k + 1) * per]:
            chain = add(chain, crew, txs[k * per:(k + 1) * per], k)
    if pending:
        chain = add(chain, crew, pending, 10)
    return chain


def test_prune_counting_oracle(crew):
    chain = synthetic(crew)
    out, proof = prune(chain, crew[0])
    kinds = {}
    for _, tx in out.transactions():
        kinds[tx.kind] = kinds.get(tx.kind, 0) + 1
    assert len(proof.transcribed) == 100 and len(proof.kept) == 20
    # each revealed bloat vanishes with its reveal
    assert len(proof.removed) == 200
    assert untidy_size(out) == 20 * BLOAT
    revealed_bytes = sum(chain.get_tx(i).declared_size for i in proof.removed)
    assert chain.total_size() - out.total_size() == revealed_bytes
    assert out.fixed_upto == 2 and out.blocks[0] == chain.blocks[0]
    verify_prune(chain, out, proof)


def test_prune_without_revealed_bloat_is_a_noop(crew):
    chain = synthetic(crew, revealed_bloat=0)
    out, proof = prune(chain, crew[0])
    assert out == chain and not proof.removed
    verify_prune(chain, out, proof)


def test_tampered_transcription_is_rejected(crew):
    chain = synthetic(crew)
    out, proof = prune(chain, crew[0])
    block = out.blocks[1]
    forged = make_transaction(crew[2], TransactionKind.PAYLOAD, b"forged".ljust(BLOAT, b"\0"))
    txs = list(block.transactions)
    txs[0] = forged
    from potchain.storage.compaction import _gcn_block
    from potchain.chain import Chain

    bad_block = _gcn_block(out.blocks[0], 1, crew[0], txs, chain.tip)
    rest = _gcn_block(bad_block, 2, crew[0], out.blocks[2].transactions, chain.tip)
    bad = Chain((out.blocks[0], bad_block, rest), out.fixed_upto)
    with pytest.raises(InvalidPrune):
        verify_prune(chain, bad, proof)


def test_second_collector_takes_over(crew):
    chain = synthetic(crew)

    def compute(c, gcn):
        out, proof = prune(c, gcn)
        if gcn is crew[0]:
            return c, proof  # a lazy first collector returns the input unchanged
        return out, proof

    out, proof, who = coordinated_prune(chain, [crew[0], crew[1]], compute)
    assert who == crew[1].node and len(proof.removed) == 200


def test_designated_collector(crew):
    chain = synthetic(crew)
    gcn = designated_gcn(chain, 30 * BLOAT)
    assert gcn is not None
    other = next(i for i in crew if i.node != gcn)
    with pytest.raises(NotDesignated):
        prune(chain, other, designated=gcn)


def test_prune_only_touches_final_blocks(crew):
    chain = synthetic(crew)
    out, proof = prune(chain, crew[0], is_final=lambda b: b.height <= 5)
    # reveals sit in the last block, which is not final yet
    assert not proof.removed and out == chain


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 15), st.integers(0, 15), st.integers(0, 6), st.integers(0, 1000))
def test_prune_preserves_information(rel, rb, hb, seed):
    crew = deterministic_roster(3, 5)
    chain = synthetic(crew, rel, rb, hb, seed)
    out, proof = prune(chain, crew[seed % 3])
    verify_prune(chain, out, proof)
    before = {tx.id for _, tx in chain.transactions()}
    after = {tx.id for _, tx in out.transactions()}
    assert before - after == set(proof.removed)
    assert all(tx.verify() for _, tx in out.transactions())
    assert replay_state(out) == replay_state(chain)
    assert out.fixed_upto >= chain.fixed_upto
    again, proof2 = prune(out, crew[0])
    assert again.fixed_upto >= out.fixed_upto


def test_classification(crew):
    me = crew[0]
    c, ctx, secret = commit(me, b"secret", CommitMode.GAME_HASH, 3, rng=random.Random(1))
    hidden, _, _ = commit(me, b"later", CommitMode.GAME_HASH, 3, rng=random.Random(2))
    btx, seed = make_bloat(me, 32, rng=random.Random(3))
    pay = make_transaction(me, TransactionKind.PAYLOAD, b"p")
    chain = add(base_chain(crew), crew, [ctx, btx, pay, commit(me, b"h", CommitMode.GAME_HASH, 3, rng=random.Random(4))[1]], 0)
    chain = add(chain, crew, [reveal_transaction(me, c, secret), bloat_reveal_transaction(me, btx, seed)], 1)
    assert classify(ctx, chain) is TxClass.RELEVANT_REVEALED
    assert classify(btx, chain) is TxClass.BLOAT_REVEALED
    assert classify(chain.blocks[1].transactions[3], chain) is TxClass.RELEVANT_HIDDEN
    fixed = chain.with_fixed_upto(2)
    assert classify(pay, fixed) is TxClass.RELEVANT_HISTORIC


# child chains


def test_child_rollover_arithmetic():
    size = Fraction(1, 1000)
    mgr = ChildChainManager(Fraction(1))
    for k in range(2500):
        mgr.route_to_child(Hash32.of(k.to_bytes(4, "big")), size)
    assert mgr.states() == {1: ChildState.FULL, 2: ChildState.FULL, 3: ChildState.OPEN}
    assert len(mgr.children[2].entries) == 500


def test_revealed_child_becomes_deletable(crew):
    mgr = ChildChainManager(10)
    ids = [Hash32.of(bytes([k])) for k in range(15)]
    for i in ids:
        mgr.route_to_child(i, 1)
    for i in ids[:9]:
        mgr.reveal_on_child(i, b"k", make_transaction(crew[0], TransactionKind.PAYLOAD, bytes(i)))
    mgr.mark_obsolete(ids[9])
    assert mgr.states()[1] is ChildState.DELETABLE
    assert mgr.gc_children(keep=True)[1] is ChildState.DELETABLE
    assert mgr.gc_children()[1] is ChildState.DELETED
    assert mgr.stored() == 5 and len(mgr.main_residues) == 9


# meta-state cut


def revealed_chain(crew, blocks=6):
    chain = base_chain(crew)
    rng = random.Random(9)
    for k in range(blocks):
        me = crew[k % 3]
        c, ctx, secret = commit(me, f"order {k}".encode(), CommitMode.GAME_HASH, 9, rng=rng)
        pay = make_transaction(me, TransactionKind.PAYLOAD, f"chat {k}".encode())
        chain = add(chain, crew, [ctx, pay, reveal_transaction(me, c, secret)], k)
    return chain


def test_meta_cut_preserves_replay(crew):
    chain = revealed_chain(crew)
    cut = meta_state_cut(chain, 4, crew[0], PASSED, tail=2)
    assert cut.blocks[0].kind == BlockKind.META_STATE_GENESIS
    assert [b.height for b in retained_tail(cut)] == [3, 4]
    assert replay_state(cut) == replay_state(chain)
    head = type(chain)(chain.blocks[:5])
    assert replay_state(type(cut)(cut.blocks[:1])) == replay_state(head)
    assert validate_chain(cut).ok


def test_meta_cut_edge_cases(crew):
    chain = revealed_chain(crew)
    assert meta_state_cut(chain, 0, crew[0], None) is chain
    with pytest.raises(VoteFailed):
        meta_state_cut(chain, 3, crew[0], Outcome(True, False, 0, 3, 0, 3))
    hidden = commit(crew[1], b"sneaky", CommitMode.GAME_HASH, 9, rng=random.Random(1))[1]
    chain = add(chain, crew, [hidden], 6)
    chain = add(chain, crew, [make_transaction(crew[2], TransactionKind.PAYLOAD, b"x")], 7)
    with pytest.raises(UnrevealedBeforeCut):
        meta_state_cut(chain, 8, crew[0], PASSED)


# storage model


def test_blockchain_size_table():
    assert blockchain_size(600_000) == 600
    assert blockchain_size(100_000) == 100
    assert blockchain_size(100_000, games=10) == 1000
    sc = StorageScenario(600_000, bloat_ratio=Fraction(0), step=100_000)
    series = dict(storage_series(sc, SeriesMode.NONE))
    assert series[600_000] == 600 and series[100_000] == 100


def bisect(fn, lo, hi, tol=1e-15):
    for _ in range(200):
        mid = (lo + hi) / 2
        if (fn(lo) > 0) == (fn(mid) > 0):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_breakeven_threshold():
    p = StorageParams()
    adv = breakeven(p)
    large, small, h = 0.01, 32 / MB, 32 / MB
    oracle = bisect(lambda f: f * large - (h + f * small), 0.0, 1.0)
    assert abs(float(adv.threshold) - oracle) / oracle < 1e-9
    assert round(float(adv.threshold), 5) == 0.00306
    assert adv.mode is CommitModeAdvice.GAME_HASH
    assert breakeven(p, 1).mode is CommitModeAdvice.GAME_HASH


def test_breakeven_degenerate_and_small_moves():
    with pytest.raises(Degenerate):
        breakeven(StorageParams(size_bloat_large=Fraction(32, MB), size_bloat_small=32))
    tiny = StorageParams(size_bloat_large=Fraction(16, MB))
    assert breakeven(tiny, 1).mode is CommitModeAdvice.ENCRYPTED


@settings(max_examples=50)
@given(st.integers(1, 10_000), st.integers(1, 10_000), st.integers(1, 512), st.fractions(0, 100))
def test_breakeven_advice_matches_costs(large_bytes, small, hsize, f):
    if large_bytes == small:
        return
    p = StorageParams(size_bloat_large=Fraction(large_bytes, MB), size_bloat_small=small, game_hash_size=hsize)
    adv = breakeven(p, f)
    assert (adv.mode is CommitModeAdvice.GAME_HASH) == (hsize + f * small < f * large_bytes)


def test_prune_and_child_agree():
    sc = StorageScenario(60_000, prune_every=1000, child_capacity=Fraction(1), step=500)
    prune_series = storage_series(sc, SeriesMode.PRUNE)
    child_series = storage_series(sc, SeriesMode.CHILD)
    for (c1, a), (c2, b) in zip(prune_series, child_series):
        assert c1 == c2 and abs(a - b) <= sc.tx_size


def test_meta_series_plateaus():
    sc = StorageScenario(300_000, meta_every=10_000, step=10_000)
    level = meta_level(sc)
    after_cuts = [storage_at(c, sc, SeriesMode.META) for c in range(100_000, 300_001, 10_000)]
    assert all(v == level for v in after_cuts)
    assert storage_at(300_000, sc, SeriesMode.NONE) > 100 * level


def test_series_csv_roundtrip(tmp_path):
    sc = StorageScenario(5000, step=1000)
    path = tmp_path / "s.csv"
    write_series_csv({"none": storage_series(sc, "none"), "prune": storage_series(sc, "prune")}, path)
    rows = read_series_csv(path)
    assert path.read_text().splitlines()[0] == "tx_count,mode,MB"
    assert rows[:2] == [(0, "none", 0.0), (1000, "none", 1.0)]
    assert len(rows) == 12
