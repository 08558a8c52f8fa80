import csv
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potchain.chain import (
    BlockKind,
    GenesisConfig,
    TransactionKind,
    append_block,
    build_block,
    deterministic_roster,
    link_hash,
    make_transaction,
    new_chain,
)
from potchain.consensus import EarlyFinalize, TurnMachine, TurnSchedule
from potchain.peering import (
    DEFAULT_STRATEGY,
    NetworkLost,
    PullStrategy,
    PullStrategyRejected,
    PullView,
    StaticNetwork,
    drains,
    full_push,
    guess_leader,
    hops,
    index_bounds,
    probe_order,
    pull_interval,
    pull_once,
    push_round,
    push_turn,
    source_of,
    turn_awareness,
    wake_ticks,
    write_delivery_csv,
)


@pytest.mark.parametrize("x, expected", [(-9, 30), (-25, 120), (0, 12)])
def test_pull_interval_anchors(x, expected):
    assert pull_interval(x, 60) == expected


def test_rate_shape():
    s = DEFAULT_STRATEGY
    assert s.rate(-25) == Fraction(1, 2)
    assert s.rate(-9) == 2 and s.rate(-15) == 2 and s.rate(-6) == 2
    assert s.rate(0) == 5
    # linear ramp between the anchors at -5 and 0
    assert s.rate(Fraction(-5, 2)) == Fraction(7, 2)
    values = [s.rate(x) for x in range(-15, 1)]
    assert values == sorted(values)


def test_post_turn_deep_sleep_and_steady():
    assert pull_interval(2, 60, n=40) == 600
    steady = PullStrategy(post_turn="steady")
    assert pull_interval(2, 60, steady, n=40) == 12


def test_index_range_enforced():
    assert index_bounds(50) == (-40, 10)
    with pytest.raises(ValueError):
        pull_interval(11, 60, n=50)


def test_validation_rejects_runaway_strategies():
    DEFAULT_STRATEGY.validate(60, 10)
    with pytest.raises(PullStrategyRejected):
        PullStrategy(far_rate=Fraction(1, 100)).validate(60, 50)
    with pytest.raises(PullStrategyRejected):
        PullStrategy(post_turn_rate=Fraction(0)).validate(60, 10)


def schedule(n, seed=0):
    ids = deterministic_roster(n, seed)
    return ids, TurnSchedule(tuple(i.node for i in ids), 20, 5, early_finalize=EarlyFinalize.WAIT)


@pytest.mark.parametrize("elapsed_turns, start, expected", [(3, 2, 5), (0, 2, 2), (8, 2, 2)])
def test_guess_leader(elapsed_turns, start, expected):
    ids, s = schedule(8)
    assert guess_leader(100, ids[start].node, s, 100 + elapsed_turns * s.period) == ids[expected].node


@settings(max_examples=60)
@given(st.integers(1, 30), st.integers(0, 29), st.integers(0, 10_000))
def test_guess_leader_modular_oracle(n, start, elapsed):
    ids, s = schedule(n, 1)
    start %= n
    got = guess_leader(0, ids[start].node, s, elapsed)
    assert got == ids[(start + elapsed // 25) % n].node


def test_probe_order_alternates_outward():
    ids, s = schedule(8)
    order = probe_order(s, ids[4].node, ids[7].node)
    assert order == [ids[k].node for k in (4, 3, 5, 2, 6, 1, 0)]


def pull_setup(n=6):
    ids, s = schedule(n)
    cfg = GenesisConfig("testnet", tuple(i.node for i in ids), 20, 5)
    chain = new_chain(cfg.genesis_block())
    view = PullView(ids[-1].node, s, 0, ids[0].node, link_hash(chain.tip))
    return ids, s, chain, view


def test_pull_falls_back_to_predecessor():
    ids, s, chain, view = pull_setup()
    net = StaticNetwork({i.node: chain for i in ids}, {i.node for i in ids} - {ids[2].node})
    res = pull_once(view, net, 2 * s.period)
    assert res.probes == [ids[2].node, ids[1].node]
    assert res.responder == ids[1].node


def test_pull_recalibrates_on_newer_transition():
    ids, s, chain, view = pull_setup()
    m = TurnMachine(s, chain)
    m.finalize_turn(ids[0], 3)  # shifted turn boundaries the heuristic cannot know
    for k in range(1, 4):
        m.finalize_turn(ids[k], k * s.period + 4)
    net = StaticNetwork({i.node: m.chain for i in ids}, {i.node for i in ids})
    now = 4 * s.period + 1
    res = pull_once(view, net, now)
    assert res.view.last_leader == ids[4].node
    assert res.view.last_transition_tick == 3 * s.period + 4 + 5
    assert guess_leader(res.view.last_transition_tick, res.view.last_leader, s, now) == ids[4].node


def test_pull_with_everyone_offline():
    ids, s, chain, view = pull_setup()
    with pytest.raises(NetworkLost):
        pull_once(view, StaticNetwork({}, set()), 30)


def test_leader_skips_pulling():
    ids, s, chain, view = pull_setup()
    res = pull_once(view, StaticNetwork({}, set()), 5 * s.period)
    assert res.skipped and not res.probes


@pytest.mark.parametrize(
    "x, n, expected",
    [(2, 500, list(range(20, 30))), (55, 600, list(range(550, 560))), (4, 43, [40, 41, 42]), (0, 5, [1, 2, 3, 4])],
)
def test_drains(x, n, expected):
    assert drains(x, n) == expected


def bfs_hops(n):
    """Independent oracle: walk the source chain up to the leader."""
    out = {0: 0}
    for x in range(1, n):
        k, y = 0, x
        while y:
            y = 0 if y < 10 else y // 10
            k += 1
        out[x] = k
    return out


def test_full_coverage_hop_counts():
    rep = push_round(200)
    assert rep.unreached == set()
    assert rep.reached == bfs_hops(200)
    assert rep.reached[157] == 3 and rep.max_hops == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10_000))
def test_unique_source_and_hop_bound(n):
    rep = push_round(n)
    assert rep.unreached == set()
    assert all(c == 1 for c in rep.deliveries.values())
    assert all(rep.sources[x] == source_of(x) for x in range(1, n))
    assert all(hops(x) == rep.reached[x] for x in range(n))
    assert rep.max_hops == (len(str(n - 1)) if n > 1 else 0)


def test_offline_drain_loses_its_subtree_for_one_round():
    first = push_turn(100, 0, [6])
    assert first.unreached == {6} | set(range(60, 70))
    second = push_turn(100, 1, [6])
    assert second.unreached == {5} | set(range(50, 60))
    assert not (set(range(60, 70)) & second.unreached)


@settings(max_examples=30, deadline=None)
@given(st.integers(12, 300), st.integers(1, 299), st.integers(0, 20))
def test_rotation_heals_index_ranges(n, off, start):
    off %= n
    if off == 0:
        off = 1
    prev = None
    for r in range(start, start + 4):
        if (off - r) % n == 0:
            prev = None  # an offline leader reaches nobody; not a subtree loss
            continue
        rep = push_turn(n, r % n, [off])
        lost = rep.unreached - {(off - r) % n}
        if prev is not None:
            assert not (lost & prev)
        prev = lost


def test_jump_pipes_bypass_offline_drain():
    rep = push_round(100, set(range(100)) - {2}, jump_pipes=True)
    assert rep.unreached == {2}
    assert all(rep.sources[d] == 0 for d in range(20, 30))


def test_horizontal_pipes_fill_layer_gaps():
    rep = push_round(100, set(range(100)) - {6}, horizontal_pipes=True)
    assert rep.unreached == {6}
    assert rep.sources[60] == 59 and rep.sources[69] == 68
    assert rep.reached[69] == 12


def test_full_push_sends_missing_suffix():
    ids = [i.node for i in deterministic_roster(5, 0)]
    rep = full_push(ids[0], ids, ids[:4], {ids[1]: 10, ids[2]: 7}, 10)
    assert rep.delivered == {ids[1]: 0, ids[2]: 3, ids[3]: 11}
    assert rep.unreachable == [ids[4]]


def test_delivery_csv(tmp_path):
    path = tmp_path / "push.csv"
    write_delivery_csv([push_round(12, round_no=3)], path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["round", "index", "hops", "reached"]
    assert rows[1:3] == [["3", "0", "0", "1"], ["3", "1", "1", "1"]]
    assert rows[-1] == ["3", "11", "2", "1"]


@pytest.mark.parametrize("n", [5, 8, 12, 20])
def test_stiff_turns_are_never_missed(n):
    ids, s = schedule(n)
    turns = 3 * n
    for node in ids:
        wakes = wake_ticks(s, node.node, 0, turns * s.period, DEFAULT_STRATEGY)
        assert not any(missed for _, _, missed in turn_awareness(s, None, node.node, wakes, turns))
