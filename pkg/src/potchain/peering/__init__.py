"""Update dissemination: pull intervals and probe walks, push trees."""

from .pull import (
    DEFAULT_STRATEGY,
    NetworkLost,
    NoAnswer,
    PeerNetwork,
    PullStrategy,
    PullStrategyRejected,
    PullView,
    Referral,
    StaticNetwork,
    UpdateRequest,
    UpdateResult,
    guess_leader,
    index_bounds,
    probe_order,
    pull_interval,
    pull_once,
    recalibrate,
    turn_awareness,
    wake_ticks,
)
from .push import (
    DeliveryReport,
    FullPushReport,
    drains,
    full_push,
    hops,
    index_of,
    push_round,
    push_turn,
    source_of,
    write_delivery_csv,
)
