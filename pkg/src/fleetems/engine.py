"""Deterministic discrete-event core: clock, event queue, delivery and tracing."""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
from collections import Counter
from dataclasses import dataclass, field

from . import protocol as proto
from .energy import Cause, Ledger, is_depleted, rx_cost, tx_cost
from .metrics.report import MetricsAccumulator, MetricsReport
from .model import Battery, DroneId, Position, Role, centroid, distance, to_units
from .protocol import BROADCAST, GBS, Context, DroneState, Envelope

CONTROL_KINDS = (
    proto.WakeupElection, proto.BatteryReport, proto.ElectionMessage, proto.LeaveMessage,
)


DEPARTED = Role.DEPARTED


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class Event:
    """``envelope is None`` marks a Tick for every live drone."""

    time: int
    seq: int
    envelope: Envelope | None = None
    dst: DroneId | str | None = None

    @property
    def is_tick(self) -> bool:
        return self.envelope is None


class EventQueue:
    """Min-heap on (time, seq); seq is handed out at scheduling time."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.clock = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: int, envelope: Envelope | None = None, dst=None) -> Event:
        if time < self.clock:
            raise EngineError(f"event at t={time} scheduled in the past (clock={self.clock})")
        ev = Event(time, self._seq, envelope, dst)
        self._seq += 1
        heapq.heappush(self._heap, (time, ev.seq, ev))
        return ev

    def peek_time(self) -> int:
        return self._heap[0][0]

    def pop(self) -> Event:
        time, _, ev = heapq.heappop(self._heap)
        if time < self.clock:
            raise EngineError("event queue went backwards")
        self.clock = time
        return ev

    def pending(self) -> list[Event]:
        return [e for _, _, e in sorted(self._heap)]


TRACE_HEADER = ("time", "drone", "label", "emitted")


@dataclass
class Trace:
    drones: list[DroneId]
    rows: list | None
    ledger: Ledger
    report: MetricsReport
    digest: str
    initial_levels: dict[DroneId, int]
    final_states: dict[DroneId, DroneState]
    sent_by_kind: dict[str, int]
    in_flight: int
    end_time: int
    stopped_by: str
    summary: dict = field(default_factory=dict)

    @property
    def energy_drawn(self) -> int:
        return sum(self.initial_levels.values()) - sum(
            s.battery.level for s in self.final_states.values())

    def write_csv(self, fh) -> None:
        if self.rows is None:
            raise ValueError("trace was recorded without rows")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, d, label, k in self.rows:
            w.writerow((t, str(d), label, k))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


class Simulation:
    """One run over an instantiated scenario (see ``scenario.instantiate``).

    ``observer`` may implement ``sent(sim, env, recipients)``,
    ``delivered(sim, env, dst)`` and ``after_event(sim)``; it is used by the
    safety checks and costs nothing when absent.

    Envelopes a handler emits are transmitted from the sender's position
    after that transition: a new leader announces itself from its hover
    point, a demoted one hands over from home.
    """

    def __init__(self, scenario, keep_rows: bool = True, keep_ledger: bool = True, observer=None):
        self.scenario = scenario
        self.energy = scenario.energy
        self.critical = scenario.energy.critical_fraction
        # the engine drains batteries in place, so never share the scenario's objects
        self.states: dict[DroneId, DroneState] = {d: s.evolve() for d, s in scenario.states.items()}
        self.order = sorted(self.states)
        self.by_cluster: dict[int, list[DroneId]] = {}
        for d in self.order:
            self.by_cluster.setdefault(d.cluster, []).append(d)
        self.gbs = scenario.gbs
        self.max_ticks = scenario.max_ticks
        self.queue = EventQueue()
        self.ledger = Ledger(keep_records=keep_ledger)
        self.rows: list | None = [] if keep_rows else None
        self.metrics = MetricsAccumulator()
        self._hash = hashlib.sha256()
        self.sent: Counter = Counter()
        self.control_in_flight: Counter = Counter()
        self.observer = observer
        self._centroids: dict[int, Position] = {}
        self.ctx = Context(
            now=0,
            gbs=self.gbs,
            centroid=self._centroid,
            payloads=scenario.payloads,
            election_timeout=scenario.election_timeout,
        )
        self.initial_levels = {d: s.battery.level for d, s in self.states.items()}
        self._idle_units = to_units(self.energy.idle_per_tick)
        self._sense_units = to_units(self.energy.sense_per_sample)

    # -- bookkeeping ---------------------------------------------------------

    def _row(self, t: int, drone, label: str, emitted: int) -> None:
        row = (t, drone, label, emitted)
        self._hash.update(f"{t},{drone},{label},{emitted}\n".encode())
        self.metrics.feed(row)
        if self.rows is not None:
            self.rows.append(row)

    def _centroid(self, cluster: int) -> Position:
        c = self._centroids.get(cluster)
        if c is None:
            homes = [self.states[d].home for d in self.by_cluster[cluster] if self.states[d].live]
            c = self._centroids[cluster] = centroid(homes)
        return c

    def _drain(self, st: DroneState, cause: Cause, units: int) -> None:
        b = st.battery
        taken = units if units < b.level else b.level
        if taken <= 0:
            return
        st.battery = Battery(b.capacity_full, b.level - taken, b.b0_at_election)
        self.ledger.append(self.queue.clock, st.id, cause, taken)

    def _position(self, addr) -> Position:
        return self.gbs if addr == GBS else self.states[addr].position

    def live_in_cluster(self, cluster: int, exclude=None) -> list[DroneId]:
        return [d for d in self.by_cluster[cluster] if d != exclude and self.states[d].live]

    # -- sending and delivery ------------------------------------------------

    def _send(self, env: Envelope) -> None:
        src = env.src
        pos = self.states[src].position
        if env.dst == BROADCAST:
            recipients = self.live_in_cluster(src.cluster, exclude=src)
            d = max((distance(pos, self.states[r].position) for r in recipients), default=0.0)
        else:
            recipients = [env.dst]
            d = distance(pos, self._position(env.dst))
        self._drain(self.states[src], Cause.TX, to_units(tx_cost(self.energy, env.payload_bytes, d)))
        t = self.queue.clock + 1
        control = isinstance(env.kind, CONTROL_KINDS)
        for r in recipients:
            self.queue.schedule(t, env, r)
            self.sent[env.kind_name] += 1
            if control:
                self.control_in_flight[src.cluster] += 1
        if isinstance(env.kind, proto.ElectionMessage) and not env.kind.announce:
            self._row(self.queue.clock, src, "elect", len(recipients))
        if self.observer is not None:
            self.observer.sent(self, env, recipients)

    def inject(self, env: Envelope, dst, delay: int = 1) -> None:
        """Schedule an extra copy of ``env`` for ``dst`` (fault injection in tests)."""
        self.queue.schedule(self.queue.clock + delay, env, dst)
        self.sent[env.kind_name] += 1
        if isinstance(env.kind, CONTROL_KINDS):
            self.control_in_flight[env.src.cluster] += 1

    def _apply(self, did: DroneId, step: proto.Step, label: str) -> None:
        new, out = step
        if out and not self.states[did].live:
            raise EngineError(f"departed drone {did} emitted {out[0].kind_name}")
        self.states[did] = new
        self._row(self.queue.clock, did, label, len(out))
        for env in out:
            self._send(env)
        if new.role is DEPARTED:
            self._centroids.pop(did.cluster, None)
            if label != "depart":
                self._row(self.queue.clock, did, "depart", 0)

    def _settle(self, did: DroneId) -> None:
        while True:
            st = self.states[did]
            if st.role is DEPARTED:
                return
            if not st.departing and is_depleted(st.battery, self.critical):
                step = proto.on_depleted(st, self.ctx)
                self._apply(did, step, "depart" if not step[0].live else "depleted")
            elif (st.role is Role.LEADER and not st.election_pending and not st.departing
                  and proto.should_trigger_election(st)):
                self._apply(did, proto.start_election(st, self.ctx), "threshold")
            else:
                return

    def _deliver(self, ev: Event) -> None:
        env, dst = ev.envelope, ev.dst
        if isinstance(env.kind, CONTROL_KINDS):
            self.control_in_flight[env.src.cluster] -= 1
        if dst == GBS:
            self._row(ev.time, GBS, "recv:" + env.kind_name, 0)
            return
        st = self.states[dst]
        if st.role is DEPARTED:
            self._row(ev.time, dst, "drop:" + env.kind_name, 0)
            return
        self._drain(st, Cause.RX, to_units(rx_cost(self.energy, env.payload_bytes)))
        if self.observer is not None:
            self.observer.delivered(self, env, dst)
        self._apply(dst, proto.handle(self.states[dst], env, self.ctx), "recv:" + env.kind_name)
        self._settle(dst)

    def _tick(self, ev: Event) -> None:
        any_live = False
        for did in self.order:
            st = self.states[did]
            if st.role is DEPARTED:
                continue
            if self._idle_units:
                self._drain(st, Cause.IDLE, self._idle_units)
            if self._sense_units and proto.generates_sample(st):
                self._drain(st, Cause.SENSE, self._sense_units)
            self._apply(did, proto.on_tick(st, self.ctx), "tick")
            self._settle(did)
            any_live = any_live or self.states[did].role is not DEPARTED
        if any_live and ev.time + 1 < self.max_ticks:
            self.queue.schedule(ev.time + 1)

    # -- driver --------------------------------------------------------------

    def start(self) -> None:
        for did in self.order:
            if not self.states[did].live:
                self._row(0, did, "depart", 0)
        for env, dst in self.scenario.initial_messages:
            self.queue.schedule(0, env, dst)
            self.sent[env.kind_name] += 1
        if any(s.live for s in self.states.values()):
            self.queue.schedule(0)

    def step(self) -> Event:
        ev = self.queue.pop()
        self.ctx.now = ev.time
        if ev.is_tick:
            self._tick(ev)
        else:
            self._deliver(ev)
        if self.observer is not None:
            self.observer.after_event(self)
        return ev

    def run(self) -> Trace:
        self.start()
        stopped_by = "drained"
        while self.queue:
            if self.queue.peek_time() >= self.max_ticks:
                stopped_by = "max_ticks"
                break
            self.step()
        return self.finish(stopped_by)

    def finish(self, stopped_by: str) -> Trace:
        report = self.metrics.report(self.order)
        if stopped_by == "drained" and any(s.live for s in self.states.values()):
            stopped_by = "max_ticks"
        in_flight = sum(1 for e in self.queue.pending() if not e.is_tick)
        trace = Trace(
            drones=list(self.order),
            rows=self.rows,
            ledger=self.ledger,
            report=report,
            digest=self._hash.hexdigest(),
            initial_levels=self.initial_levels,
            final_states=dict(self.states),
            sent_by_kind=dict(self.sent),
            in_flight=in_flight,
            end_time=self.queue.clock,
            stopped_by=stopped_by,
        )
        trace.summary = run_summary(trace)
        return trace


def run_summary(trace: Trace) -> dict:
    r = trace.report
    out = {
        "digest": trace.digest,
        "stopped_by": trace.stopped_by,
        "end_time": trace.end_time,
        "drones": len(trace.drones),
        "mean_cluster_lifetime": r.mean_cluster_lifetime,
        "mean_death_time": r.mean_death_time,
        "election_count": r.election_count,
        "events_total": r.events_total,
        "deliveries": r.deliveries,
        "drops": r.drops,
        "in_flight": trace.in_flight,
        "energy_drawn_units": trace.energy_drawn,
        "ledger_total_units": trace.ledger.total,
    }
    for c, v in r.cluster_lifetime.items():
        out[f"cluster_{c}_lifetime"] = v
    for kind in proto.MESSAGE_KINDS:
        out[f"messages_{kind}"] = r.messages_by_kind.get(kind, 0)
    return out


def run(scenario, keep_rows: bool = True, keep_ledger: bool = True, observer=None) -> Trace:
    return Simulation(scenario, keep_rows, keep_ledger, observer).run()
