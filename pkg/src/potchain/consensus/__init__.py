"""Proof-of-Turn state machine: schedule, finality, votes, forks, membership."""

from .finality import AlreadyFinal, FinalityTracker, Status
from .forks import (
    Branch,
    ContinueMostProgressive,
    ForkPolicy,
    Merge,
    NoCommonAncestor,
    VoteChoice,
    most_progressive,
    resolve_fork,
)
from .machine import (
    Event,
    MissingCounterSignature,
    NotLeader,
    TurnExpired,
    TurnMachine,
    WrongSuccessor,
    countersign,
    export_events,
    read_events,
)
from .membership import (
    BadInsertIndex,
    GraceExhausted,
    JoinProposal,
    LostLeader,
    NightSwitch,
    RejoinForbidden,
    UndisclosedObligations,
    VacationBreak,
    VoteRequired,
    adapt_turn_time,
    encode_leave_notice,
    join_node,
    kick_node,
    leave_node,
)
from .schedule import (
    AdaptivePolicy,
    EarlyFinalize,
    GraceExtension,
    Leader,
    Paused,
    Pause,
    ScheduleError,
    Timeline,
    Transition,
    TurnSchedule,
    TurnWindow,
    current_leader,
    timeline_for,
    turn_at,
)
from .voting import (
    DoubleBallot,
    Outcome,
    Question,
    VoteClosed,
    VoteState,
    cast_ballot,
    open_vote,
    tally,
)
