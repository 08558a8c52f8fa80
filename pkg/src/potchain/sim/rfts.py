"""A scripted space-strategy game played on the turn chain.

Players own planets on a small grid, produce ships every turn and send
fleets to other planets. Every fleet is a hidden commitment that is opened
when it lands; ship counts are published only through fog reports.
The script also draws cards from private and shared piles, covers its
moves with bloat and ends with a win claim under full disclosure.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction

from ..chain import (
    Chain,
    GenesisConfig,
    Hash32,
    Identity,
    Transaction,
    TransactionKind,
    deterministic_roster,
    make_transaction,
    new_chain,
)
from ..chain.codec import lp, u64
from ..consensus import EarlyFinalize, Question, TurnMachine, TurnSchedule, cast_ballot, open_vote, tally
from ..consensus.schedule import timeline_for
from ..contracts import (
    CommitMode,
    Commitment,
    ContractError,
    Dispute,
    FogPolicy,
    FollowUp,
    FollowUpBook,
    PrivatePile,
    RandomizationSession,
    RecoverImpossible,
    Secret,
    Strategy,
    Verdict,
    accept_fog_report,
    bloat_reveal_transaction,
    commit,
    contribution_digest,
    draw,
    enforce_timeout,
    fog_report,
    make_bloat,
    random_run,
    resolve_dispute,
    reveal_transaction,
    shuffle_deck,
    splitmix64,
    win_claim,
)
from ..contracts.draws import pile_bytes

FOG = FogPolicy(30)
GRID = 5
TURN_TICKS = 20
TRANSITION_TICKS = 5


class TooFewPlayers(ContractError):
    pass


@dataclass
class Planet:
    pid: int
    x: int
    y: int
    owner: int | None
    ships: int
    fixed: int


@dataclass
class Fleet:
    owner: int
    src: int
    dst: int
    ships: int
    before: int  # ships on the source planet when the fleet left
    send_turn: int
    arrive_turn: int
    commitment: Commitment
    tx: Transaction
    secret: Secret
    recall: FollowUp | None = None
    recall_secret: Secret | None = None
    recall_tx: Transaction | None = None
    settled: bool = False
    cheat: bool = False


@dataclass
class Player:
    idx: int
    identity: Identity
    pile: PrivatePile
    pile_commitment: Commitment
    pile_secret: Secret
    hidden: list[tuple[Commitment, Secret]] = field(default_factory=list)
    bloat: list[tuple[Transaction, bytes]] = field(default_factory=list)
    dropped: bool = False


@dataclass
class GameTrace:
    lines: list[str]
    chain: Chain
    planets: list[Planet]
    winner: str | None
    verdicts: dict[str, Verdict]
    ledger: dict[str, int]
    in_transit: int
    invalidated: list[str]
    disputes: list[Dispute]
    recover_failed: bool
    callbacks: int
    turns_played: int

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def ships_conserved(self) -> bool:
        """Ships on planets plus fleets in flight match what was ever created or lost."""
        on_planets = sum(p.ships for p in self.planets)
        created = self.ledger["initial"] + self.ledger["produced"] + self.ledger["bonus"]
        return on_planets + self.in_transit == created - self.ledger["lost"] - self.ledger["abandoned"]


def _layout(players: int, rng: random.Random) -> list[Planet]:
    cells = [(x, y) for x in range(GRID) for y in range(GRID)]
    rng.shuffle(cells)
    planets = []
    for pid, (x, y) in enumerate(cells[: players * 3]):
        owner = pid if pid < players else None
        ships = 10 if owner is not None else 3 + pid % 4
        planets.append(Planet(pid, x, y, owner, ships, 2 if owner is not None else 1))
    return planets


def _distance_rounds(a: Planet, b: Planet) -> int:
    return max(1, abs(a.x - b.x), abs(a.y - b.y))


class _Game:
    def __init__(self, players: int, rounds: int, seed: int, cheat: bool, dropout: int | None, drop_round: int, withhold: int | None) -> None:
        self.rng = random.Random(seed)
        self.n = players
        self.rounds = rounds
        self.ids = deterministic_roster(players, seed, prefix="p")
        roster = tuple(i.node for i in self.ids)
        genesis = GenesisConfig(f"rfts-{seed}", roster, TURN_TICKS, TRANSITION_TICKS).genesis_block()
        self.schedule = TurnSchedule(roster, TURN_TICKS, TRANSITION_TICKS, early_finalize=EarlyFinalize.WAIT)
        self.machine = TurnMachine(self.schedule, new_chain(genesis))
        self.lines: list[str] = []
        self.planets = _layout(players, self.rng)
        self.ledger = {"initial": sum(p.ships for p in self.planets), "produced": 0, "bonus": 0, "lost": 0, "abandoned": 0}
        self.fleets: list[Fleet] = []
        self.followups = FollowUpBook()
        self.mempool: list[Transaction] = []
        self.round_value = 0
        self.session: RandomizationSession | None = None
        self.contributions: dict[int, tuple[int, bytes]] = {}
        self.fog_checks: list[tuple[int, int, int, int]] = []  # (owner, published, true, random value)
        self.spent: dict[tuple[int, int], int] = {}
        self.disputes: list[Dispute] = []
        self.invalidated: list[str] = []
        self.recover_failed = False
        self.shared_open = True
        self.cheat_pending = cheat
        self.dropout = dropout
        self.drop_turn = drop_round * players + (dropout or 0) if dropout is not None else None
        self.withhold = withhold
        self.callback_used = False
        self.callbacks = 0
        self.players = []
        for i, ident in enumerate(self.ids):
            cards = [f"bonus:{1 + (i + k) % 4}".encode() for k in range(12)]
            self.rng.shuffle(cards)
            salt = self.rng.randbytes(16)
            pile = PrivatePile(ident, cards, salt=salt)
            c, tx, secret = commit(ident, pile_bytes(cards), CommitMode.GAME_HASH, rounds * players + players, 0, salt=salt, rng=self.rng)
            self.players.append(Player(i, ident, pile, c, secret))
            self.mempool.append(tx)
        shared = [f"shared:{1 + k % 5}".encode() for k in range(24)]
        self.deck = shuffle_deck(roster, shared, self.rng)
        self.shared_order = list(range(len(shared)))
        self.rng.shuffle(self.shared_order)

    def log(self, turn: int, who: int | None, event: str, detail: str = "-") -> None:
        label = self.ids[who].label if who is not None else "-"
        self.lines.append(f"{turn} {label} {event} {detail}")

    # hidden moves

    def hide(self, p: Player, data: bytes, turn: int) -> tuple[Commitment, Transaction, Secret]:
        c, tx, secret = commit(p.identity, data, CommitMode.GAME_HASH, self.rounds * self.n + self.n, turn, rng=self.rng)
        self.mempool.append(tx)
        cover, seed = make_bloat(p.identity, len(tx.body), TransactionKind.HIDDEN_GAME_HASH, self.rng)
        self.mempool.append(cover)
        p.bloat.append((cover, seed))
        return c, tx, secret

    def open(self, p: Player, c: Commitment, secret: Secret) -> Transaction:
        tx = reveal_transaction(p.identity, c, secret, self.rng)
        self.mempool.append(tx)
        return tx

    # randomness

    def start_session(self, turn: int, leader: int) -> None:
        self.session = RandomizationSession(self.ids[leader].node, deadline=turn + self.n, low=0, high=(1 << 32) - 1)
        self.contributions = {}
        for p in self.players:
            if p.dropped:
                continue
            value, salt = self.rng.randrange(1, 1000), self.rng.randbytes(8)
            digest = contribution_digest(value, salt)
            self.session.commit(p.identity.node, digest)
            self.contributions[p.idx] = (value, salt)
            self.mempool.append(make_transaction(p.identity, TransactionKind.RANDOM_COMMIT, bytes(digest)))
        self.log(turn, leader, "random-open", str(len(self.contributions)))

    def finish_session(self, turn: int, leader: int) -> None:
        session = self.session
        if session is None:
            return
        for i, (value, salt) in self.contributions.items():
            p = self.players[i]
            if p.dropped:
                continue
            session.reveal(p.identity.node, value, salt)
            self.mempool.append(make_transaction(p.identity, TransactionKind.RANDOM_REVEAL, u64(value) + lp(salt)))
        self.round_value = random_run(session, now=session.deadline)
        self.session = None
        self.log(turn, leader, "random", str(self.round_value))

    # game actions

    def produce(self, turn: int, who: int) -> None:
        for pl in self.planets:
            if pl.owner == who:
                extra = splitmix64((self.round_value << 8) + pl.pid) % 4
                pl.ships += pl.fixed + extra
                self.ledger["produced"] += pl.fixed + extra

    def strongest(self, who: int) -> Planet | None:
        own = [pl for pl in self.planets if pl.owner == who]
        return max(own, key=lambda pl: (pl.ships, -pl.pid)) if own else None

    def send(self, turn: int, who: int, src: Planet, dst: Planet, ships: int, before: int, cheat: bool = False) -> Fleet:
        p = self.players[who]
        arrive = turn + _distance_rounds(src, dst) * self.n
        fleet_data = {"before": before, "dst": dst.pid, "ships": ships, "src": src.pid, "turn": turn}
        c, tx, secret = self.hide(p, json.dumps(fleet_data, sort_keys=True).encode(), turn)
        fleet = Fleet(who, src.pid, dst.pid, ships, before, turn, arrive, c, tx, secret, cheat=cheat)
        self.fleets.append(fleet)
        self.log(turn, who, "fleet", tx.id.hex()[:16])
        return fleet

    def move(self, turn: int, who: int) -> None:
        src = self.strongest(who)
        if src is None or src.ships < 6:
            return
        if self.cheat_pending and who == 1 and turn >= 4 * self.n:
            # the same ships leave twice
            self.cheat_pending = False
            targets = sorted((pl for pl in self.planets if pl.pid != src.pid), key=lambda pl: (_distance_rounds(src, pl), pl.pid))
            stock = src.ships
            src.ships = 0
            self.send(turn, who, src, targets[0], stock, stock)
            self.send(turn, who, src, targets[0], stock, stock, cheat=True)
            return
        targets = [pl for pl in self.planets if pl.owner != who]
        if not targets:
            return
        dst = min(targets, key=lambda pl: (_distance_rounds(src, pl), pl.ships, pl.pid))
        ships = src.ships // 2
        before = src.ships
        src.ships -= ships
        fleet = self.send(turn, who, src, dst, ships, before)
        if not self.callback_used and fleet.arrive_turn - turn >= 2 * self.n:
            self.callback_used = True
            fleet.recall = FollowUp(fleet.tx.id, fleet.commitment, turn, fleet.arrive_turn - turn)

    def recall(self, turn: int, who: int) -> None:
        p = self.players[who]
        for f in self.fleets:
            if f.owner != who or f.recall is None or f.recall_tx is not None or f.settled:
                continue
            data = json.dumps({"recall": f.tx.id.hex(), "turn": turn}, sort_keys=True).encode()
            c, tx, secret = self.hide(p, data, turn)
            f.recall = self.followups.follow_up(f.tx.id, c, f.send_turn, f.arrive_turn - f.send_turn)
            f.recall_secret, f.recall_tx = secret, tx
            f.arrive_turn = 2 * turn - f.send_turn  # back home
            self.callbacks += 1
            self.log(turn, who, "callback", f.tx.id.hex()[:16])

    def land(self, turn: int, who: int) -> list[tuple[Fleet, Transaction]]:
        p = self.players[who]
        opened = []
        for f in self.fleets:
            if f.owner != who or f.settled or f.arrive_turn != turn:
                continue
            f.settled = True
            rtx = self.open(p, f.commitment, f.secret)
            opened.append((f, rtx))
            if f.recall is not None and f.recall_secret is not None:
                self.open(p, f.recall.delta, f.recall_secret)
                ob = enforce_timeout(f.recall, f.recall.arrival)
                self.planets[f.src].ships += f.ships
                self.log(turn, who, "returned", f"{f.ships} window={ob.callback_range}")
                continue
            if f.cheat:
                continue  # resolved by the double-spend check once the block is out
            self.battle(turn, f)
        return opened

    def battle(self, turn: int, f: Fleet) -> None:
        dst = self.planets[f.dst]
        if dst.owner == f.owner:
            dst.ships += f.ships
            self.log(turn, f.owner, "reinforce", f"{dst.pid}+{f.ships}")
        elif f.ships > dst.ships:
            self.ledger["lost"] += 2 * dst.ships
            dst.ships = f.ships - dst.ships
            dst.owner = f.owner
            self.log(turn, f.owner, "capture", f"{dst.pid}:{dst.ships}")
        else:
            self.ledger["lost"] += 2 * f.ships
            dst.ships -= f.ships
            self.log(turn, f.owner, "repelled", f"{dst.pid}:{dst.ships}")

    def check_spends(self, turn: int, opened: list[tuple[Fleet, Transaction]]) -> None:
        """Every other player checks the opened fleets for ships spent twice."""
        for f, rtx in opened:
            if f.recall is not None:
                continue
            key = (f.src, f.send_turn)
            remaining = self.spent.get(key)
            if remaining is not None and f.before != remaining:
                self.invalidate(turn, f, rtx)
                continue
            self.spent[key] = f.before - f.ships

    def invalidate(self, turn: int, f: Fleet, rtx: Transaction) -> None:
        accuser = next(p for p in self.players if p.idx != f.owner and not p.dropped)
        dispute = Dispute("double-spend", self.ids[f.owner].node, bytes(f.tx.id), "fleet ships already spent", accuser.identity.node)
        self.disputes.append(dispute)
        call = Hash32.of(b"invalidate", bytes(f.tx.id))
        active = [p.identity.node for p in self.players if not p.dropped]
        vote = open_vote(call, Question.INVALIDATE_TX, bytes(f.tx.id), turn, self.n, Fraction(1, 2), accuser.identity.node)
        self.mempool.append(make_transaction(accuser.identity, TransactionKind.VOTE_CALL, bytes(call) + bytes(f.tx.id)))

        def ballot(_: Dispute):
            for p in self.players:
                if p.dropped:
                    continue
                yes = p.idx != f.owner
                cast_ballot(vote, p.identity.node, yes, turn)
                self.mempool.append(make_transaction(p.identity, TransactionKind.VOTE_BALLOT, bytes(call) + u64(int(yes))))
            return tally(vote, active, turn)

        outcome = resolve_dispute(dispute, Strategy.VOTE, vote=ballot)
        self.log(turn, accuser.idx, "vote", f"double-spend passed={outcome.upheld} {outcome.detail}")
        if outcome.upheld:
            ids = {f.tx.id, rtx.id}
            self.machine.chain = self.machine.chain.with_invalidated(ids)
            self.invalidated.extend(sorted(i.hex() for i in ids))
            self.log(turn, f.owner, "turn-reset", str(f.send_turn))

    def private_draw(self, turn: int, who: int) -> None:
        p = self.players[who]
        if len(p.pile.taken) >= len(p.pile.cards):
            return
        res = draw(2, p.identity, pile=p.pile, seed=self.round_value + turn, deadline=self.rounds * self.n + self.n, rng=self.rng)
        self.mempool.append(res.transaction)
        p.hidden.append((res.commitment, res.secret))
        target = self.strongest(who)
        if target is not None:
            bonus = int(res.card.split(b":")[1])
            target.ships += bonus
            self.ledger["bonus"] += bonus
        self.log(turn, who, "draw-private", res.transaction.id.hex()[:16])

    def shared_draw(self, turn: int, who: int) -> None:
        if not self.shared_open or not self.shared_order:
            return
        lost = [p for p in self.players if p.dropped and p.identity.node in self.deck.deck.parties]
        if lost:
            dispute = Dispute("shuffle-secrets-lost", lost[0].identity.node, detail="party left holding layer keys")
            self.disputes.append(dispute)
            try:
                resolve_dispute(dispute, Strategy.RECOVER, recover=lambda d: False)
            except RecoverImpossible as exc:
                self.recover_failed = True
                self.shared_open = False
                self.log(turn, who, "recover-impossible", str(exc).replace(" ", "_"))
            return
        index = self.shared_order.pop()
        res = draw(5, self.ids[who], deck=self.deck, index=index)
        body = u64(index) + b"".join(lp(c.released) for c in res.claim_chain.claims) + lp(res.card)
        self.mempool.append(make_transaction(self.ids[who], TransactionKind.DRAW_CLAIM, body))
        target = self.strongest(who)
        if target is not None:
            bonus = int(res.card.split(b":")[1])
            target.ships += bonus
            self.ledger["bonus"] += bonus
        self.log(turn, who, "draw-shared", f"{index}:{res.card.decode()}")

    def fog(self, turn: int, who: int) -> None:
        p = self.players[who]
        truth, reports = {}, {}
        for pl in self.planets:
            if pl.owner != who:
                continue
            rv = splitmix64((self.round_value << 16) ^ (turn << 6) ^ pl.pid)
            truth[str(pl.pid)] = pl.ships
            rep = fog_report(pl.ships, FOG, rv)
            reports[str(pl.pid)] = rep.published
            self.fog_checks.append((who, rep.published, pl.ships, rv))
        if not truth:
            return
        c, _, secret = self.hide(p, json.dumps({"ships": truth, "turn": turn}, sort_keys=True).encode(), turn)
        p.hidden.append((c, secret))
        body = json.dumps(reports, sort_keys=True).encode()
        self.mempool.append(make_transaction(p.identity, TransactionKind.FOG_REPORT, body))
        self.log(turn, who, "fog", body.decode())

    # turn driver

    def seal(self, turn: int, who: int) -> None:
        w = timeline_for(self.schedule, self.machine.chain).window_of_turn(turn)
        if self.mempool:
            self.machine.propose_block(self.ids[who], self.mempool, w.start)
            self.mempool = []
        succ = self.schedule.position_of_turn(turn + 1)
        if self.players[succ].dropped:
            self.machine.finalize_turn(self.ids[who], w.write_end - 1)
        else:
            self.machine.handover(self.ids[who], self.ids[succ], w.write_end - 1)

    def play_turn(self, turn: int) -> None:
        who = self.schedule.position_of_turn(turn)
        if self.drop_turn is not None and turn == self.drop_turn:
            p = self.players[self.dropout]
            p.dropped = True
            for f in self.fleets:
                if f.owner == p.idx and not f.settled:
                    f.settled = True
                    self.ledger["abandoned"] += 0 if f.cheat else f.ships
            self.log(turn, p.idx, "dropout")
        if self.players[who].dropped:
            self.log(turn, who, "silent")
            return
        if turn % self.n == 0:
            self.start_session(turn, who)
        if turn % self.n == 1 and self.session is not None:
            self.finish_session(turn, who)
        self.produce(turn, who)
        opened = self.land(turn, who)
        self.recall(turn, who)
        self.move(turn, who)
        rnd = turn // self.n
        if rnd % 3 == 1:
            self.private_draw(turn, who)
        if rnd % 4 == 2:
            self.shared_draw(turn, who)
        self.fog(turn, who)
        self.seal(turn, who)
        self.check_spends(turn, opened)

    def disclose(self, turn: int) -> None:
        """Open everything still hidden, except what a withholding player keeps back."""
        for p in self.players:
            if p.dropped:
                continue
            for f in self.fleets:
                if f.owner == p.idx and not f.settled:
                    self.open(p, f.commitment, f.secret)
            self.open(p, p.pile_commitment, p.pile_secret)
            for c, secret in p.hidden:
                self.open(p, c, secret)
            keep = 1 if p.idx == self.withhold else 0
            for tx, seed in p.bloat[keep:]:
                self.mempool.append(bloat_reveal_transaction(p.identity, tx, seed, self.rng))
            self.log(turn, p.idx, "disclose", str(len(p.bloat) - keep))

    def replay(self, chain: Chain, revealed: dict) -> list[str]:
        problems = []
        for owner, published, true, rv in self.fog_checks:
            try:
                accept_fog_report(published, true, FOG, rv, self.ids[owner].node)
            except ContractError as exc:
                problems.append(str(exc))
        live = {tx.id for _, tx in chain.transactions() if tx.id not in chain.invalidated}
        for f in self.fleets:
            if f.cheat and f.tx.id in live:
                problems.append(f"fleet {f.tx.id.short()} spends ships twice")
        return problems

    def run(self) -> GameTrace:
        total = self.rounds * self.n
        for turn in range(total):
            self.play_turn(turn)
        turn = total
        in_transit = sum(f.ships for f in self.fleets if not f.settled and not f.cheat)
        self.disclose(turn)
        while self.mempool:
            who = self.schedule.position_of_turn(turn)
            if not self.players[who].dropped:
                self.seal(turn, who)
            turn += 1
        chain = self.machine.chain
        active = [p for p in self.players if not p.dropped]
        best = max(active, key=lambda p: (sum(1 for pl in self.planets if pl.owner == p.idx), sum(pl.ships for pl in self.planets if pl.owner == p.idx), -p.idx))
        verdicts = {}
        for p in self.players:
            v = win_claim(p.identity.node, chain, self.replay)
            verdicts[p.identity.label] = v
            self.log(turn, p.idx, "win-claim", "granted" if v.granted else f"denied:{len(v.reasons)}")
        self.log(turn, None, "winner", best.identity.label)
        self.lines.append(f"tip {chain.tip_hash.hex()}")
        return GameTrace(
            self.lines,
            chain,
            self.planets,
            best.identity.label,
            verdicts,
            dict(self.ledger),
            in_transit,
            self.invalidated,
            self.disputes,
            self.recover_failed,
            self.callbacks,
            total,
        )


def rfts_scenario(
    players: int = 3,
    rounds: int = 30,
    seed: int = 0,
    *,
    cheat: bool = True,
    dropout: int | None = None,
    drop_round: int = 15,
    withhold: int | None = None,
) -> GameTrace:
    """Play a scripted game and return its trace.

    ``cheat`` makes player 1 send the same ships twice once; ``dropout``
    names a player who leaves at ``drop_round`` with its shuffle secrets;
    ``withhold`` names a player who keeps one bloat reveal back at the end.
    """
    if players < 3:
        raise TooFewPlayers(f"the shared deck needs at least three players, got {players}")
    if rounds < 1:
        raise ValueError("rounds must be positive")
    return _Game(players, rounds, seed, cheat, dropout, drop_round, withhold).run()
