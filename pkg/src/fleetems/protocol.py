"""Per-drone protocol state machine.

Every handler takes the current ``DroneState`` (never mutated) and returns
the successor state plus the envelopes it emits. Energy is not touched
here: the engine charges radio, idle and sensing costs around each call.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Union

from .model import (
    Battery,
    DroneId,
    Position,
    Role,
    leader_position,
)


class ProtocolError(RuntimeError):
    pass


GBS = "GBS"
BROADCAST = "*"

# A drone that hands leadership over stays reachable this many ticks, long
# enough for a LeaveMessage from a successor that dies before taking office.
HANDOFF_TICKS = 3

Address = Union[DroneId, str]
Sample = tuple  # (origin DroneId, tick)


# -- messages ---------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Init:
    pass


@dataclass(frozen=True, slots=True)
class Data:
    sample: Sample


@dataclass(frozen=True, slots=True)
class BaseMessage:
    buffered_samples: tuple


@dataclass(frozen=True, slots=True)
class WakeupElection:
    pass


@dataclass(frozen=True, slots=True)
class BatteryReport:
    id: DroneId
    cluster: int
    level: int


@dataclass(frozen=True, slots=True)
class ElectionMessage:
    new_leader: DroneId
    # Live cluster membership as known to the sender; lets a new leader know
    # whose reports to wait for. Does not change the wire size.
    roster: frozenset = frozenset()
    announce: bool = False
    # (level, id) pairs the winner was picked from; audit only, not on the wire.
    ballot: tuple = field(default=(), compare=False)


@dataclass(frozen=True, slots=True)
class LeaveMessage:
    id: DroneId


MESSAGE_KINDS = (
    "Init", "Data", "BaseMessage", "WakeupElection",
    "BatteryReport", "ElectionMessage", "LeaveMessage",
)


@dataclass(frozen=True)
class PayloadTable:
    """Wire sizes in bytes. BaseMessage is ``base_header + base_per_sample * n``."""

    Init: int = 16
    Data: int = 64
    base_header: int = 32
    base_per_sample: int = 64
    WakeupElection: int = 16
    BatteryReport: int = 24
    ElectionMessage: int = 16
    LeaveMessage: int = 16

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"payload size {f.name} must be positive")

    def size(self, msg) -> int:
        if isinstance(msg, BaseMessage):
            return self.base_header + self.base_per_sample * len(msg.buffered_samples)
        return getattr(self, type(msg).__name__)


@dataclass(frozen=True, slots=True)
class Envelope:
    kind: object
    src: Address
    dst: Address
    payload_bytes: int
    send_time: int

    @property
    def kind_name(self) -> str:
        return type(self.kind).__name__


@dataclass
class Context:
    """What a handler may know about the world beyond its own state."""

    now: int
    gbs: Position
    centroid: Callable[[int], Position]
    payloads: PayloadTable = field(default_factory=PayloadTable)
    election_timeout: int = 4


# -- state ------------------------------------------------------------------

@dataclass(eq=False)
class DroneState:
    id: DroneId
    role: Role
    position: Position
    home: Position
    battery: Battery
    threshold: float
    buffer_capacity: int
    roster: frozenset
    known_leader: DroneId | None = None
    buffer: tuple = ()
    election_pending: bool = False
    pending_reports: tuple = ()
    election_started: int = -1
    initialized: bool = False
    departing: bool = False
    baseline: bool = False
    handoff_until: int = -1

    @property
    def cluster_size_known(self) -> int:
        return len(self.roster)

    @property
    def live(self) -> bool:
        return self.role is not Role.DEPARTED

    def evolve(self, **changes) -> "DroneState":
        new = object.__new__(DroneState)
        new.__dict__.update(self.__dict__)
        new.__dict__.update(changes)
        return new

    def snapshot(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


Step = tuple[DroneState, list[Envelope]]


def _env(ctx: Context, src: Address, dst: Address, msg) -> Envelope:
    return Envelope(msg, src, dst, ctx.payloads.size(msg), ctx.now)


def _flush(state: DroneState, ctx: Context, out: list[Envelope]) -> DroneState:
    if not state.buffer:
        return state
    out.append(_env(ctx, state.id, GBS, BaseMessage(state.buffer)))
    return state.evolve(buffer=())


def _take_lead(state: DroneState, ctx: Context, roster: frozenset) -> DroneState:
    pos = leader_position(ctx.centroid(state.id.cluster), ctx.gbs)
    b = state.battery
    return state.evolve(
        role=Role.LEADER,
        known_leader=state.id,
        position=pos,
        roster=roster,
        battery=Battery(b.capacity_full, b.level, b.level),
        buffer=(),
        pending_reports=(),
        election_pending=False,
    )


# -- operations -------------------------------------------------------------

def initial_leaders(clusters: Iterable[Iterable[DroneId]]) -> dict[int, DroneId]:
    leaders = {}
    for idx, members in enumerate(clusters):
        members = list(members)
        if not members:
            raise ValueError(f"topology error: cluster {idx} is empty")
        best = min(members)
        leaders[best.cluster] = best
    return leaders


def on_init(state: DroneState, env: Envelope, ctx: Context) -> Step:
    if state.initialized:
        raise ProtocolError(f"duplicate Init at {state.id}")
    out: list[Envelope] = []
    if state.role is Role.LEADER:
        state = _take_lead(state, ctx, state.roster).evolve(initialized=True)
        out.append(_env(ctx, state.id, BROADCAST,
                        ElectionMessage(state.id, state.roster, announce=True)))
        return state, out
    # A member either already heard the leader (update phase) or waits for it.
    return state.evolve(initialized=True), out


def generates_sample(state: DroneState) -> bool:
    if not state.live or state.departing or not state.initialized and not state.baseline:
        return False
    if state.baseline or state.role is Role.LEADER:
        return True
    return state.known_leader is not None


def on_tick(state: DroneState, ctx: Context) -> Step:
    if not state.live:
        return state, []
    out: list[Envelope] = []
    if state.baseline:
        out.append(_env(ctx, state.id, GBS, Data((state.id, ctx.now))))
        return state, out
    if state.role is Role.LEADER:
        state = _collect(state, (state.id, ctx.now), ctx, out)
        if state.election_pending and ctx.now - state.election_started >= ctx.election_timeout:
            state = _complete_election(state, ctx, out)
        return state, out
    if state.departing:
        # out of charge, only waiting out the handoff watch
        if ctx.now >= state.handoff_until:
            state = state.evolve(role=Role.DEPARTED)
        return state, out
    if generates_sample(state):
        out.append(_env(ctx, state.id, state.known_leader, Data((state.id, ctx.now))))
    return state, out


def _collect(state: DroneState, sample: Sample, ctx: Context, out: list[Envelope]) -> DroneState:
    state = state.evolve(buffer=state.buffer + (sample,))
    if len(state.buffer) >= state.buffer_capacity:
        state = _flush(state, ctx, out)
    return state


def on_data(state: DroneState, env: Envelope, ctx: Context) -> Step:
    out: list[Envelope] = []
    if state.role is Role.LEADER:
        return _collect(state, env.kind.sample, ctx, out), out
    # Stale routing: the sender still believes we lead.
    if state.known_leader is None or state.known_leader == state.id:
        raise ProtocolError(f"Data at non-leader {state.id} with no leader to forward to")
    out.append(_env(ctx, state.id, state.known_leader, env.kind))
    return state, out


def should_trigger_election(state: DroneState) -> bool:
    b = state.battery
    # strict: level < b0 * (1 - T/100), evaluated without rounding
    return b.level * 100 < b.b0_at_election * (100 - state.threshold)


def start_election(state: DroneState, ctx: Context) -> Step:
    if state.role is not Role.LEADER:
        raise ProtocolError(f"start_election on non-leader {state.id}")
    if state.election_pending:
        raise ProtocolError(f"election already pending at {state.id}")
    out: list[Envelope] = []
    state = _flush(state, ctx, out)
    if state.cluster_size_known <= 1:
        b = state.battery
        return state.evolve(battery=Battery(b.capacity_full, b.level, b.level)), out
    out.append(_env(ctx, state.id, BROADCAST, WakeupElection()))
    return state.evolve(election_pending=True, pending_reports=(), election_started=ctx.now), out


def on_wakeup(state: DroneState, env: Envelope, ctx: Context) -> Step:
    if not state.live or state.role is Role.LEADER or state.departing:
        return state, []
    report = BatteryReport(state.id, state.id.cluster, state.battery.level)
    return state, [_env(ctx, state.id, env.src, report)]


def select_gbest(reports: Iterable[BatteryReport], self_level: int | None, self_id: DroneId) -> DroneId:
    """Drone with the most remaining charge; ties go to the lowest id.

    ``self_level=None`` leaves the caller out of the candidate set.
    """
    candidates = [(r.level, r.id) for r in reports]
    if self_level is not None:
        candidates.append((self_level, self_id))
    if not candidates:
        raise ValueError("no election candidates")
    return min(candidates, key=lambda c: (-c[0], c[1]))[1]


def _awaited(state: DroneState) -> frozenset:
    got = {r.id for r in state.pending_reports}
    return frozenset(d for d in state.roster if d != state.id and d not in got)


def on_report(state: DroneState, env: Envelope, ctx: Context) -> Step:
    rep = env.kind
    if state.role is not Role.LEADER or not state.election_pending:
        return state, []  # late or duplicate report after the election closed
    if rep.id not in state.roster or rep.id == state.id:
        return state, []
    reports = tuple(r for r in state.pending_reports if r.id != rep.id) + (rep,)
    state = state.evolve(pending_reports=reports)
    out: list[Envelope] = []
    if not _awaited(state):
        state = _complete_election(state, ctx, out)
    return state, out


def _complete_election(state: DroneState, ctx: Context, out: list[Envelope]) -> DroneState:
    roster = state.roster - {state.id} if state.departing else state.roster
    reports = [r for r in state.pending_reports if r.id in roster]
    state = state.evolve(election_pending=False, pending_reports=())
    if not reports and state.departing:
        state = _flush(state, ctx, out)
        return state.evolve(role=Role.DEPARTED, known_leader=None)
    self_level = None if state.departing else state.battery.level
    winner = select_gbest(reports, self_level, state.id)
    ballot = tuple((r.level, r.id) for r in reports)
    if self_level is not None:
        ballot += ((self_level, state.id),)
    out.append(_env(ctx, state.id, BROADCAST, ElectionMessage(winner, roster, ballot=ballot)))
    if winner == state.id:
        return _take_lead(state, ctx, roster).evolve(buffer=state.buffer)
    state = _flush(state, ctx, out)
    return state.evolve(role=Role.MEMBER, known_leader=winner, position=state.home,
                        roster=roster, handoff_until=ctx.now + HANDOFF_TICKS)


def on_election_result(state: DroneState, env: Envelope, ctx: Context) -> Step:
    msg = env.kind
    if msg.roster and msg.new_leader not in msg.roster:
        raise ProtocolError(f"ElectionMessage names {msg.new_leader}, not a live cluster member")
    roster = msg.roster or state.roster
    if msg.new_leader == state.id:
        return _take_lead(state, ctx, roster), []
    if state.role is Role.LEADER:
        # A second leader announcing itself; yield to it.
        state = state.evolve(buffer=(), pending_reports=(), election_pending=False)
    return state.evolve(role=Role.MEMBER, known_leader=msg.new_leader,
                        position=state.home, roster=roster), []


def on_depleted(state: DroneState, ctx: Context) -> Step:
    out: list[Envelope] = []
    if not state.live:
        return state, out
    if state.role is not Role.LEADER:
        if state.known_leader is not None and not state.baseline:
            out.append(_env(ctx, state.id, state.known_leader, LeaveMessage(state.id)))
        if ctx.now < state.handoff_until:
            return state.evolve(departing=True), out
        return state.evolve(role=Role.DEPARTED), out
    if state.election_pending:
        return state.evolve(departing=True), out
    if state.cluster_size_known > 1:
        state, out = start_election(state.evolve(departing=True), ctx)
        if state.election_pending:
            return state, out
    state = _flush(state, ctx, out)
    return state.evolve(role=Role.DEPARTED, known_leader=None), out


def on_leave(state: DroneState, env: Envelope, ctx: Context) -> Step:
    leaver = env.kind.id
    out: list[Envelope] = []
    if state.role is Role.LEADER:
        if leaver not in state.roster or leaver == state.id:
            raise ProtocolError(f"LeaveMessage for unknown member {leaver} at {state.id}")
        state = state.evolve(
            roster=state.roster - {leaver},
            pending_reports=tuple(r for r in state.pending_reports if r.id != leaver),
        )
        if state.election_pending and not _awaited(state):
            state = _complete_election(state, ctx, out)
        return state, out
    if leaver == state.known_leader:
        # The drone we handed leadership to left before taking over: reclaim
        # and run a fresh election among the rest.
        roster = (state.roster | {state.id}) - {leaver}
        state = _take_lead(state, ctx, roster)
        if state.departing and len(roster) <= 1:
            return state.evolve(role=Role.DEPARTED, known_leader=None), out
        return start_election(state, ctx)
    if state.known_leader is None:
        raise ProtocolError(f"LeaveMessage at {state.id} with no leader to forward to")
    out.append(_env(ctx, state.id, state.known_leader, env.kind))
    return state, out


HANDLERS: dict[type, Callable[[DroneState, Envelope, Context], Step]] = {
    Init: on_init,
    Data: on_data,
    WakeupElection: on_wakeup,
    BatteryReport: on_report,
    ElectionMessage: on_election_result,
    LeaveMessage: on_leave,
}


def handle(state: DroneState, env: Envelope, ctx: Context) -> Step:
    try:
        handler = HANDLERS[type(env.kind)]
    except KeyError:
        raise ProtocolError(f"{type(env.kind).__name__} cannot be delivered to a drone") from None
    return handler(state, env, ctx)
