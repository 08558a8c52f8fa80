from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potchain.chain import (
    BlockKind,
    Hash32,
    append_block,
    TransactionKind,
    build_block,
    deterministic_roster,
    make_transaction,
    new_chain,
    GenesisConfig,
)
from potchain.consensus import (
    AdaptivePolicy,
    AlreadyFinal,
    BadInsertIndex,
    Branch,
    ContinueMostProgressive,
    DoubleBallot,
    EarlyFinalize,
    FinalityTracker,
    ForkPolicy,
    GraceExhausted,
    JoinProposal,
    Leader,
    LostLeader,
    Merge,
    MissingCounterSignature,
    NoCommonAncestor,
    NotLeader,
    Pause,
    Paused,
    Question,
    RejoinForbidden,
    ScheduleError,
    Status,
    Transition,
    TurnExpired,
    TurnMachine,
    TurnSchedule,
    UndisclosedObligations,
    VacationBreak,
    VoteChoice,
    VoteClosed,
    VoteRequired,
    WrongSuccessor,
    adapt_turn_time,
    cast_ballot,
    current_leader,
    encode_leave_notice,
    join_node,
    kick_node,
    leave_node,
    open_vote,
    resolve_fork,
    tally,
)
from potchain.consensus.voting import Outcome

T = 5
TURN = 20


def schedule_for(ids, mode=EarlyFinalize.SHIFT, **kw):
    return TurnSchedule(tuple(i.node for i in ids), TURN, T, early_finalize=mode, **kw)


def machine_for(ids, mode=EarlyFinalize.SHIFT, **kw):
    cfg = GenesisConfig("testnet", tuple(i.node for i in ids), TURN, T)
    return TurnMachine(schedule_for(ids, mode, **kw), new_chain(cfg.genesis_block()))


def passed(n=4):
    return Outcome(True, True, n, 0, 0, n)


def failed(n=4):
    return Outcome(True, False, 0, n, 0, n)


# schedule


@pytest.mark.parametrize(
    "kw",
    [
        dict(turn_duration=5, transition_duration=5),
        dict(turn_duration=20, transition_duration=0),
        dict(turn_duration=20, overflow_fraction=Fraction(1)),
    ],
)
def test_schedule_rejects_bad_parameters(ids, kw):
    kw.setdefault("turn_duration", 20)
    with pytest.raises(ScheduleError):
        TurnSchedule(tuple(i.node for i in ids), **kw)


def test_fresh_chain_starts_with_first_roster_node(ids):
    st0 = current_leader(0, schedule_for(ids))
    assert st0 == Leader(ids[0].node, 0, TURN)


@pytest.mark.parametrize("now", range(TURN, TURN + T))
def test_transition_window_follows_each_turn(ids, now):
    st0 = current_leader(now, schedule_for(ids))
    assert isinstance(st0, Transition)
    assert (st0.prev, st0.next) == (ids[0].node, ids[1].node)
    assert current_leader(TURN + T, schedule_for(ids)) == Leader(ids[1].node, 1, 2 * TURN + T)


def test_early_finalize_shifts_next_turn(ids):
    m = machine_for(ids)
    at = int(0.4 * TURN)
    m.finalize_turn(ids[0], at)
    # oracle: the next turn opens T ticks after the early finalize
    assert m.state(at + T) == Leader(ids[1].node, 1, at + T + TURN)
    assert isinstance(m.state(at + T - 1), Transition)


def test_early_finalize_wait_keeps_regular_slot(ids):
    m = machine_for(ids, EarlyFinalize.WAIT)
    m.finalize_turn(ids[0], 8)
    assert isinstance(m.state(8 + T), Transition)
    assert m.state(TURN + T) == Leader(ids[1].node, 1, 2 * TURN + T)


def test_round_of_quick_finalizes(ids):
    m = machine_for(ids)
    now = 0
    quick = TURN // 10
    for k in range(len(ids)):
        st0 = m.state(now)
        assert isinstance(st0, Leader) and st0.turn == k
        m.finalize_turn(ids[k], now + quick)
        now += quick + T
    # n * (0.1 t + T)
    assert now == len(ids) * (TURN // 10 + T)
    assert m.state(now).turn == len(ids)


def test_shifted_schedule_strands_a_sleeper():
    ids8 = deterministic_roster(8, 3)
    shift = machine_for(ids8)
    wait = machine_for(ids8, EarlyFinalize.WAIT)
    now = 0
    for k in range(6):
        shift.finalize_turn(ids8[k], now + 2)
        wait.finalize_turn(ids8[k], k * (TURN + T) + 2)
        now += 2 + T
    # the sleeper planned its single pull around the regular slot of turn 7
    regular_start = 7 * (TURN + T)
    # oracle: turn 6 opens at 6 * (2 + T), turn 7 one full period later
    turn7_start = 6 * (2 + T) + TURN + T
    assert shift.state(turn7_start) == Leader(ids8[7].node, 7, turn7_start + TURN)
    assert turn7_start + TURN + T <= regular_start
    assert shift.state(regular_start).turn > 7
    assert wait.state(regular_start) == Leader(ids8[7].node, 7, regular_start + TURN)


# propose / handover


def test_leader_proposes_data_block(ids):
    m = machine_for(ids)
    txs = [make_transaction(ids[0], TransactionKind.PAYLOAD, bytes([k])) for k in range(3)]
    block = m.propose_block(ids[0], txs, 3)
    assert block.kind == BlockKind.DATA and len(block.transactions) == 3
    assert m.chain.tip == block


def test_non_leader_cannot_propose(ids):
    with pytest.raises(NotLeader):
        machine_for(ids).propose_block(ids[2], [], 3)


def test_handover_margin_blocks_late_data(ids):
    m = machine_for(ids)
    with pytest.raises(TurnExpired):
        m.propose_block(ids[0], [make_transaction(ids[0], TransactionKind.PAYLOAD, b"x")], TURN - 1)


def test_propose_after_finalize_is_expired(ids):
    m = machine_for(ids, EarlyFinalize.WAIT)
    m.finalize_turn(ids[0], 4)
    with pytest.raises(TurnExpired):
        m.propose_block(ids[0], [make_transaction(ids[0], TransactionKind.PAYLOAD, b"x")], 5)


def test_handover_needs_both_signatures(ids):
    m = machine_for(ids)
    with pytest.raises(WrongSuccessor):
        m.handover(ids[0], ids[2], 16)
    with pytest.raises(MissingCounterSignature):
        m.handover(ids[0], ids[1].node, 16)
    block = m.handover(ids[0], ids[1], 16)
    assert [s.signer for s in block.signatures] == [ids[0].node, ids[1].node]
    assert m.state(16 + T) == Leader(ids[1].node, 1, 16 + T + TURN)


def test_event_log_lines(ids, tmp_path):
    from potchain.consensus import export_events, read_events

    m = machine_for(ids)
    m.propose_block(ids[0], [make_transaction(ids[0], TransactionKind.PAYLOAD, b"e")], 1)
    m.finalize_turn(ids[0], 2)
    path = tmp_path / "events.ndjson"
    export_events(m.events, path)
    back = read_events(path)
    assert [e.kind for e in back] == ["data", "finalize"]
    assert back == m.events


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, TURN - T - 1), min_size=1, max_size=12), st.integers(0, 400))
def test_exactly_one_leader_outside_transitions(finish_at, probe):
    ids = deterministic_roster(4, 0)
    m = machine_for(ids)
    now = 0
    for off in finish_at:
        st0 = m.state(now)
        m.finalize_turn(ids[st0.turn % 4], now + off)
        now += off + T
    st0 = m.state(probe)
    writers = [i for i in ids if isinstance(st0, Leader) and st0.node == i.node]
    assert len(writers) <= 1
    if not isinstance(st0, Transition):
        assert len(writers) == 1


# finality


def h(k):
    return Hash32.of(bytes([k]))


def test_half_of_ten_silent_passes_finalizes():
    ids = deterministic_roster(10, 1)
    tr = FinalityTracker([i.node for i in ids], Fraction(1, 2), round_length=100)
    tr.track(h(0), ids[0].node, 0)
    for k in range(1, 5):
        assert tr.record_pass(h(0), ids[k].node) is Status.PENDING
    assert tr.record_pass(h(0), ids[5].node) is Status.EFFECTIVE_FINAL


def test_full_round_finalizes_without_approvals():
    ids = deterministic_roster(10, 1)
    tr = FinalityTracker([i.node for i in ids], Fraction(1))
    tr.track(h(1), ids[0].node, 0)
    tr.dispute(h(1))
    statuses = [tr.record_pass(h(1), ids[k].node) for k in range(1, 10)]
    assert statuses[-1] is Status.EFFECTIVE_FINAL
    assert all(s is Status.PENDING for s in statuses[:-1])


def test_invalidation_is_terminal():
    ids = deterministic_roster(10, 1)
    tr = FinalityTracker([i.node for i in ids])
    tr.track(h(2), ids[0].node, 0)
    for k in range(1, 4):
        tr.record_pass(h(2), ids[k].node)
    assert tr.invalidate(h(2)) is Status.INVALIDATED
    with pytest.raises(AlreadyFinal):
        tr.record_pass(h(2), ids[4].node)
    with pytest.raises(AlreadyFinal):
        tr.approve(h(2), ids[5].node)
    assert tr.status(h(2)) is Status.INVALIDATED


def test_final_blocks_cannot_be_invalidated():
    ids = deterministic_roster(4, 1)
    tr = FinalityTracker([i.node for i in ids])
    tr.track(h(3), ids[0].node, 0)
    tr.approve(h(3), ids[1].node)
    tr.approve(h(3), ids[2].node)
    with pytest.raises(AlreadyFinal):
        tr.invalidate(h(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["pass", "approve", "dispute", "invalidate"]), st.integers(0, 5)), max_size=20))
def test_finality_never_regresses(ops):
    ids = deterministic_roster(6, 2)
    tr = FinalityTracker([i.node for i in ids])
    tr.track(h(4), ids[0].node, 0)
    seen = []
    for op, k in ops:
        try:
            if op == "pass":
                tr.record_pass(h(4), ids[k].node)
            elif op == "approve":
                tr.approve(h(4), ids[k].node)
            elif op == "dispute":
                tr.dispute(h(4))
            else:
                tr.invalidate(h(4))
        except AlreadyFinal:
            pass
        seen.append(tr.status(h(4)))
    for a, b in zip(seen, seen[1:]):
        if a is not Status.PENDING:
            assert b is a
    passes = sum(1 for op, _ in ops if op == "pass")
    if passes >= 5 and Status.INVALIDATED not in seen:
        assert seen[-1] is Status.EFFECTIVE_FINAL


# votes


def ballots_vote(ids, yes_idx, no_idx, threshold):
    v = open_vote(h(9), Question.INVALIDATE_TX, b"tx", 0, 100, threshold)
    for k in yes_idx:
        cast_ballot(v, ids[k].node, True, 1)
    for k in no_idx:
        cast_ballot(v, ids[k].node, False, 1)
    return v


def test_silence_counts_as_consent():
    ids = deterministic_roster(10, 1)
    v = ballots_vote(ids, [0, 1], [2, 3, 4], Fraction(1, 2))
    assert not tally(v, [i.node for i in ids], 50).decided
    out = tally(v, [i.node for i in ids], 100)
    assert out.passed and out.yes_fraction == Fraction(7, 10)


def test_unanimous_no_fails():
    ids = deterministic_roster(10, 1)
    out = tally(ballots_vote(ids, [], range(10), Fraction(1, 2)), [i.node for i in ids], 100)
    assert out.decided and not out.passed


def test_double_ballot_and_closed_vote():
    ids = deterministic_roster(4, 1)
    v = ballots_vote(ids, [0], [], Fraction(1, 2))
    with pytest.raises(DoubleBallot):
        cast_ballot(v, ids[0].node, False, 2)
    with pytest.raises(VoteClosed):
        cast_ballot(v, ids[1].node, True, 101)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from([None, True, False]), min_size=1, max_size=12))
def test_higher_threshold_never_passes_more(choices):
    ids = deterministic_roster(12, 1)[: len(choices)]
    outcomes = []
    for theta in (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3)):
        yes = [k for k, c in enumerate(choices) if c is True]
        no = [k for k, c in enumerate(choices) if c is False]
        out = tally(ballots_vote(ids, yes, no, theta), [i.node for i in ids], 100)
        # oracle: silence counts as yes at the deadline
        assert out.passed == (Fraction(len(choices) - len(no), len(choices)) >= theta)
        outcomes.append(out.passed)
    assert outcomes == sorted(outcomes, reverse=True)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.data())
def test_byzantine_coalitions_at_half(n, data):
    ids = deterministic_roster(n, 4)
    active = [i.node for i in ids]
    coalition = data.draw(st.integers(0, n))
    no = tally(ballots_vote(ids, [], range(coalition), Fraction(1, 2)), active, 100)
    yes = tally(ballots_vote(ids, range(coalition), [], Fraction(1, 2)), active, 1)
    if coalition < n / 2:
        assert no.passed
    if coalition >= n / 2:
        assert yes.passed and yes.early


# forks


def branch(chain, ids, plan, salt=b""):
    """plan: list of (author_index, turn) per block."""
    blocks = []
    for k, (a, turn) in enumerate(plan):
        tx = make_transaction(ids[a], TransactionKind.PAYLOAD, salt + bytes([k]))
        b = build_block(chain, ids[a], BlockKind.DATA, [tx], turn, 25 * turn + k)
        chain = append_block(chain, b)
        blocks.append(b)
    return Branch.of(blocks)


def test_most_turns_beats_most_blocks(chain0, ids):
    a = branch(chain0, ids, [(0, 0), (1, 1), (2, 2)], b"a")
    b = branch(chain0, ids, [(0, 0)] * 5 + [(1, 1)] * 4, b"b")
    # oracle: distinct (author, turn) pairs by brute force
    assert len({(x.author, x.turn_index) for x in a.blocks}) == 3
    assert len({(x.author, x.turn_index) for x in b.blocks}) == 2
    assert resolve_fork([b, a]) == ContinueMostProgressive(1)


def test_single_branch_is_kept(chain0, ids):
    a = branch(chain0, ids, [(0, 0)])
    assert resolve_fork([a]).chosen == 0


def test_tie_calls_randomization(chain0, ids):
    a = branch(chain0, ids, [(0, 0), (1, 1)], b"a")
    b = branch(chain0, ids, [(0, 0), (2, 1)], b"b")
    policy = ForkPolicy(randomize=lambda tied: tied[-1])
    out = resolve_fork([a, b], policy)
    assert out == ContinueMostProgressive(1, "randomization")
    assert policy.randomization_calls == [(0, 1)]
    timed_out = resolve_fork([a, b], ForkPolicy(randomize=lambda tied: None))
    assert timed_out.tie_break == "lowest-author"


def test_merge_and_vote_options(chain0, ids):
    a = branch(chain0, ids, [(0, 0), (1, 1)], b"a")
    b = branch(chain0, ids, [(0, 0)], b"b")
    merged = resolve_fork([a, b], ForkPolicy(compatible=lambda br: True))
    assert isinstance(merged, Merge) and merged.base == 0
    assert [tx.id for tx in merged.absorbed] == [tx.id for tx in b.transactions()]
    assert resolve_fork([a, b], ForkPolicy(vote=lambda br: 1)) == VoteChoice(1)
    fallback = resolve_fork([a, b], ForkPolicy(vote=lambda br: None))
    assert fallback.chosen == 0 and fallback.vote_failed


def test_branches_need_common_ancestor(chain0, ids):
    a = branch(chain0, ids, [(0, 0)])
    b = branch(chain0, ids, [(0, 0), (1, 1)])
    c = Branch.of(b.blocks[1:])
    with pytest.raises(NoCommonAncestor):
        resolve_fork([a, c])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10))
def test_padding_inside_turns_does_not_change_choice(left, right, extra):
    ids = deterministic_roster(4, 0)
    cfg = GenesisConfig("testnet", tuple(i.node for i in ids), 20, 5)
    chain = new_chain(cfg.genesis_block())
    plan_a = [(t % 4, t) for t in range(left)]
    plan_b = [(t % 4, t) for t in range(right)]
    padded_b = plan_b + [plan_b[-1]] * extra
    base = resolve_fork([branch(chain, ids, plan_a, b"a"), branch(chain, ids, plan_b, b"b")], ForkPolicy(randomize=lambda t: t[0]))
    pad = resolve_fork([branch(chain, ids, plan_a, b"a"), branch(chain, ids, padded_b, b"b")], ForkPolicy(randomize=lambda t: t[0]))
    assert base.chosen == pad.chosen


# membership


def test_join_at_end_of_round(ids):
    s = schedule_for(ids)
    newcomer = deterministic_roster(5, 9)[4].node
    out = join_node(s, JoinProposal(newcomer, 4), passed(), 0)
    assert out.n == 5 and out.roster[4] == newcomer
    assert current_leader(0, out).node == ids[0].node


def test_join_as_successor_is_rejected(ids):
    s = schedule_for(ids)
    newcomer = deterministic_roster(5, 9)[4].node
    for bad in (0, 1):
        with pytest.raises(BadInsertIndex):
            join_node(s, JoinProposal(newcomer, bad), passed(), 0)
    with pytest.raises(VoteRequired):
        join_node(s, JoinProposal(newcomer, 3), failed(), 0)
    assert join_node(s, JoinProposal(newcomer, 3), None, 0, trusted=True).n == 5


def test_leave_requires_disclosure_and_blocks_rejoin(ids):
    s = schedule_for(ids)
    duty = {ids[2].node: [b"shuffle-key-1", b"shuffle-key-2"]}
    silent = make_transaction(ids[2], TransactionKind.LEAVE_NOTICE, encode_leave_notice([b"shuffle-key-1"]))
    with pytest.raises(UndisclosedObligations):
        leave_node(s, silent, duty, 0)
    notice = make_transaction(ids[2], TransactionKind.LEAVE_NOTICE, encode_leave_notice(duty[ids[2].node]))
    out = leave_node(s, notice, duty, 0)
    assert ids[2].node not in out.roster and out.n == 3
    with pytest.raises(RejoinForbidden):
        join_node(out, JoinProposal(ids[2].node, 3), passed(), 0)


def test_kick_needs_passed_vote(ids):
    s = schedule_for(ids)
    with pytest.raises(VoteRequired):
        kick_node(s, ids[3].node, failed(), 0)
    assert kick_node(s, ids[3].node, passed(), 0).roster == tuple(i.node for i in ids[:3])


# adaptive turn time


def test_grace_delays_successors_then_skips(ids):
    s = schedule_for(ids, adaptive=AdaptivePolicy(lost_leader_grace=2 * TURN, grace_cap=1))
    st0 = current_leader(TURN + 1, s)
    assert isinstance(st0, Leader) and st0.node == ids[0].node and st0.turn_end == 3 * TURN
    assert current_leader(3 * TURN + T, s).node == ids[1].node
    adj = adapt_turn_time(s, LostLeader(ids[0].node, 0))
    s2 = s.with_adjustment(adj)
    with pytest.raises(GraceExhausted):
        adapt_turn_time(s2, LostLeader(ids[0].node, 4))


def test_pause_shifts_every_boundary(ids):
    s = schedule_for(ids)
    with pytest.raises(VoteRequired):
        adapt_turn_time(s, VacationBreak(ids[1].node, 3, 50))
    paused = s.with_adjustment(adapt_turn_time(s, VacationBreak(ids[1].node, 3, 50), passed()))
    assert isinstance(current_leader(10, paused), Paused)
    for k in range(6):
        plain = current_leader(k * (TURN + T), s)
        moved = current_leader(k * (TURN + T) + 50 if k else 0, paused)
        assert moved.turn == plain.turn and moved.node == plain.node
        if k:
            assert moved.turn_end == plain.turn_end + 50


def test_pause_cap(ids):
    s = schedule_for(ids, adaptive=AdaptivePolicy(pause_cap=2))
    for k in range(2):
        s = s.with_adjustment(adapt_turn_time(s, VacationBreak(ids[1].node, 100 * k, 10), passed()))
    with pytest.raises(GraceExhausted):
        adapt_turn_time(s, VacationBreak(ids[1].node, 300, 10), passed())
