"""Storage accounting and chain compaction."""

from .compaction import (
    ChildChain,
    ChildChainManager,
    ChildFullRace,
    ChildState,
    CompactionError,
    InvalidPrune,
    NotDesignated,
    PruneProof,
    RevealIndex,
    TxClass,
    UnrevealedBeforeCut,
    VoteFailed,
    classify,
    coordinated_prune,
    designated_gcn,
    meta_state_cut,
    prune,
    prune_plan,
    replay_state,
    retained_tail,
    untidy_size,
    verify_prune,
)
from .model import (
    MB,
    CommitModeAdvice,
    Degenerate,
    ModeAdvice,
    SeriesMode,
    StorageParams,
    StorageScenario,
    blockchain_size,
    breakeven,
    meta_level,
    read_series_csv,
    storage_at,
    storage_series,
    write_series_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
