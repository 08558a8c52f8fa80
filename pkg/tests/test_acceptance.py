"""End-to-end acceptance checks, one test per criterion.

``conftest.py`` prints a PASS/FAIL line for each of them after the run.
"""

import io
import itertools
import random
from fractions import Fraction
from pathlib import Path

import pytest

from potchain.chain import (
    BlockKind,
    GenesisConfig,
    TransactionKind,
    append_block,
    build_block,
    deterministic_roster,
    make_transaction,
    new_chain,
)
from potchain.cli import main
from potchain.consensus import Branch, ForkPolicy, resolve_fork
from potchain.contracts import (
    FullMistrust,
    GroupsOf,
    InvalidClaim,
    RandomizationSession,
    contribution_digest,
    fraud_resilience,
    generator,
    random_run,
    shuffle_deck,
    walk_claim_chain,
)
from potchain.contracts.deck import release_layer, release_private_key
from potchain.peering import drains, pull_interval, push_round
from potchain.sim import SimConfig, rfts_scenario, run
from potchain.storage import (
    MB,
    SeriesMode,
    StorageParams,
    StorageScenario,
    blockchain_size,
    breakeven,
    meta_level,
    storage_at,
    storage_series,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

# golden digest of the scripted three-player game, seed 0
RFTS_DIGEST = "9afe207146196c03087ac0f8f5b816cb562a1b60569fa915060b40b4f756cfae"


def test_criterion_01_pull_intervals():
    assert pull_interval(-9, 60) == 30
    assert pull_interval(-25, 60) == 120
    assert pull_interval(0, 60) == 12


def digits(x):
    return len(str(x))


@pytest.mark.parametrize("n", [50, 200, 1000])
def test_criterion_02_push_tree(n):
    assert drains(2, n) == list(range(20, 30))
    if n > 559:
        assert drains(55, n) == list(range(550, 560))
    rep = push_round(n)
    assert rep.unreached == set()
    assert all(rep.deliveries.get(x, 0) == 1 for x in range(1, n))
    assert rep.max_hops == digits(n - 1)


def test_criterion_03_randomization_seed():
    people = deterministic_roster(5, 0)
    values = [412, 369, 741]
    for order in itertools.permutations(range(3)):
        # initiator reveals 0; the fifth participant commits and goes silent
        s = RandomizationSession(people[0].node, deadline=10, high=1522)
        s.commit(people[0].node, contribution_digest(0, b"i"))
        for k in order:
            s.commit(people[k + 1].node, contribution_digest(values[k], bytes([k])))
        s.commit(people[4].node, contribution_digest(5, b"late"))
        s.reveal(people[0].node, 0, b"i")
        for k in order:
            s.reveal(people[k + 1].node, values[k], bytes([k]))
        assert s.seed == 1522
        assert random_run(s, now=10) == generator(1522, 1, 1522)


def min_hostile_fraction(sizes):
    """Smallest coalition touching every group, by exhaustive search."""
    n = sum(sizes)
    groups, start = [], 0
    for s in sizes:
        groups.append(set(range(start, start + s)))
        start += s
    for k in range(1, n + 1):
        for hostile in itertools.combinations(range(n), k):
            if all(g & set(hostile) for g in groups):
                return Fraction(k, n)
    return Fraction(1)


def test_criterion_04_shuffle_fraud_resilience():
    for n in range(3, 13):
        assert fraud_resilience(FullMistrust(), n) == min_hostile_fraction([1] * n) == 1
        for k in (2, 3):
            sizes = [k] * (n // k) + ([n % k] if n % k else [])
            assert fraud_resilience(GroupsOf(k), n) == min_hostile_fraction(sizes)
            if n % k == 0:
                assert fraud_resilience(GroupsOf(k), n) == Fraction(1, k)


CARDS = [f"{r}{s}".encode() for s in "SHDC" for r in "A23456789TJQK"]


def test_criterion_05_deck_roundtrip():
    people = [p.node for p in deterministic_roster(4, 0)]
    failures = 0
    for trial in range(1000):
        rnd = random.Random(trial)
        setup = shuffle_deck(people[: 3 + trial % 2], CARDS, rnd)
        cards = [walk_claim_chain(setup, i).card for i in range(52)]
        ok = sorted(cards) == sorted(CARDS)
        # single-value and mismatched claims on a random layer
        c = rnd.choice(setup.shufflers[1:])
        i = rnd.randrange(52)
        for entry, index in ((None, i), (c.outputs[i], None), (c.outputs[i], (i + 1) % 52)):
            try:
                release_layer(c, entry, index)
                ok = False
            except InvalidClaim:
                pass
        first = setup.shufflers[0].outputs[i]
        for body, tag in ((None, b"t"), (first, None)):
            try:
                release_private_key(setup.keyholder, body, tag)
                ok = False
            except InvalidClaim:
                pass
        failures += not ok
    assert failures == 0


def test_criterion_06_storage_model():
    assert blockchain_size(600_000) == 600
    assert blockchain_size(100_000) == 100
    plain = dict(storage_series(StorageScenario(600_000, bloat_ratio=Fraction(0), step=100_000), SeriesMode.NONE))
    assert plain[600_000] == 600 and plain[100_000] == 100
    sc = StorageScenario(60_000, prune_every=1000, child_capacity=Fraction(1), step=500)
    prune_s, child_s = storage_series(sc, SeriesMode.PRUNE), storage_series(sc, SeriesMode.CHILD)
    assert [c for c, _ in prune_s] == [c for c, _ in child_s]
    assert all(abs(a - b) <= sc.tx_size for (_, a), (_, b) in zip(prune_s, child_s))
    meta = StorageScenario(300_000, meta_every=10_000, step=10_000)
    level = meta_level(meta)
    assert all(storage_at(c, meta, SeriesMode.META) == level for c in range(100_000, 300_001, 10_000))


def bisection(fn, lo, hi):
    for _ in range(200):
        mid = (lo + hi) / 2
        if (fn(lo) > 0) == (fn(mid) > 0):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


@pytest.mark.parametrize(
    "params",
    [
        StorageParams(),
        StorageParams(size_bloat_large=Fraction(1, 1000), size_bloat_small=64, game_hash_size=32),
        StorageParams(size_bloat_large=Fraction(5), size_bloat_small=128, game_hash_size=48),
    ],
)
def test_criterion_07_breakeven(params):
    large = float(params.size_bloat_large)
    small = params.size_bloat_small / MB
    h = params.game_hash_size / MB
    oracle = bisection(lambda f: f * large - (h + f * small), 0.0, 1e6)
    got = float(breakeven(params).threshold)
    assert abs(got - oracle) / oracle < 1e-9


def test_criterion_08_consensus_safety():
    conflicts, lost = 0, 0
    for seed in range(200):
        _, m = run(SimConfig(nodes=10, rounds=2, byzantine=Fraction(2, 5), theta=Fraction(1, 2), seed=seed))
        conflicts += m.conflicts
        lost += m.forced_invalidations
    assert conflicts == 0 and lost == 0
    overrun = 0
    for seed in range(200):
        _, m = run(SimConfig(nodes=10, rounds=2, byzantine=Fraction(3, 5), theta=Fraction(1, 2), seed=seed))
        overrun += m.forced_invalidations
    assert overrun >= 1


def random_branches(rnd, ids, chain):
    branches = []
    for b in range(rnd.randint(2, 4)):
        turns = sorted(rnd.sample(range(12), rnd.randint(1, 6)))
        plan = []
        for t in turns:
            plan += [t] * rnd.randint(1, 5)
        plan = plan[:30]
        c, blocks = chain, []
        for k, t in enumerate(plan):
            author = ids[t % len(ids)]
            tx = make_transaction(author, TransactionKind.PAYLOAD, bytes([b, k]))
            blk = build_block(c, author, BlockKind.DATA, [tx], t, 25 * t + k)
            c = append_block(c, blk)
            blocks.append(blk)
        branches.append(Branch.of(blocks))
    return branches


def test_criterion_09_fork_rule():
    ids = deterministic_roster(4, 0)
    cfg = GenesisConfig("testnet", tuple(i.node for i in ids), 20, 5)
    chain = new_chain(cfg.genesis_block())
    rnd = random.Random(9)
    ties = 0
    for _ in range(300):
        branches = random_branches(rnd, ids, chain)
        turns = [len({(x.author, x.turn_index) for x in br.blocks}) for br in branches]
        sizes = [len(br.blocks) for br in branches]
        best = max(turns)
        tied = tuple(i for i, t in enumerate(turns) if t == best)
        policy = ForkPolicy(randomize=lambda options: rnd.choice(list(options)))
        out = resolve_fork(branches, policy)
        assert turns[out.chosen] == best
        if len(tied) > 1:
            ties += 1
            assert policy.randomization_calls == [tied] and out.tie_break == "randomization"
        else:
            assert policy.randomization_calls == []
        if sizes.index(max(sizes)) != out.chosen:
            assert turns[sizes.index(max(sizes))] <= best
    assert ties > 0


def test_criterion_10_clock_skew():
    transition = SimConfig().transition
    overlaps = 0
    for seed in range(100):
        skew = seed % (2 * transition - 1) - (transition - 1)
        _, m = run(SimConfig(nodes=6, rounds=2, skew_node=seed % 6, skew=skew, seed=seed))
        overlaps += m.dual_leader_ticks + m.forks
    assert overlaps == 0
    _, m = run(SimConfig(nodes=6, rounds=2, skew_node=2, skew=transition + 1, seed=0))
    assert m.dual_leader_ticks >= 1


def test_criterion_11_rfts_game():
    game = rfts_scenario(3, 30, 0)
    assert game.turns_played >= 30
    assert all(v.granted for v in game.verdicts.values())
    assert any("vote double-spend passed=True" in line for line in game.lines)
    assert game.invalidated
    withheld = rfts_scenario(3, 30, 0, withhold=1)
    assert not withheld.verdicts["p1"].granted
    assert game.digest == RFTS_DIGEST


def test_criterion_12_cli_determinism(tmp_path):
    argv = ["run", "--seed", "5", "--nodes", "7", "--scenario", str(SCENARIOS / "partition.scn")]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--out", str(a)], io.StringIO()) == 0
    assert main(argv + ["--out", str(b)], io.StringIO()) == 0
    for name in ("trace.log", "chain.potc", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
