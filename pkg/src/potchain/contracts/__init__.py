"""Game primitives: hidden commitments, randomization, card piles, fog, triggers, disputes."""

from .commitments import (
    AlreadyRevealed,
    CommitMode,
    Commitment,
    CommitmentRegistry,
    ContractError,
    DeadlineExceeded,
    Dispute,
    Mismatch,
    RevealedData,
    Secret,
    bloat_reveal_transaction,
    commit,
    commitment_from_tx,
    game_hash,
    make_bloat,
    reveal,
    reveal_transaction,
    verify_reveal,
)
from .deck import (
    AlreadyDrawn,
    BadRelease,
    ClaimChain,
    DeckCommitment,
    DeckSetup,
    InvalidClaim,
    RoleCollision,
    TooFewParties,
    read_audit_file,
    shuffle_deck,
    walk_claim_chain,
    write_audit_file,
)
from .disputes import DisputeOutcome, RecoverImpossible, Strategy, Verdict, resolve_dispute, win_claim
from .draws import DrawResult, HelperRequired, Pile, PrivatePile, draw, pick_index, verify_private_draw
from .fog import FogPolicy, FogReport, OutOfBand, accept_fog_report, fog_report
from .followup import FollowUp, FollowUpBook, Obligation, SecondFollowUp, enforce_timeout
from .fraud import FixedGroups, FullMistrust, GroupsOf, fraud_resilience
from .randomness import (
    InitiatorSilent,
    RandomizationSession,
    RandomMode,
    Reading,
    SessionOpen,
    contribution_digest,
    generator,
    random_run,
    seal_contribution,
    splitmix64,
)
from .triggers import IgnoredByLeader, Intent, RoundStalled, TriggerMechanism, TriggerOutcome, trigger

__all__ = [name for name in dir() if not name.startswith("_")]
