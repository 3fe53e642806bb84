"""Runtime invariant monitor for the leader protocol.

Attach a ``SafetyMonitor`` as the engine observer; it records every
violation instead of raising so a test can report them all at once.
"""

from __future__ import annotations

from collections import Counter, defaultdict

from . import protocol as proto
from .model import Role


def brute_force_winner(ballot) -> object:
    """Highest level wins; among equals the smallest id. Deliberately naive."""
    top = None
    for level, _ in ballot:
        if top is None or level > top:
            top = level
    tied = sorted(d for level, d in ballot if level == top)
    return tied[0]


class SafetyMonitor:
    def __init__(self):
        self.violations: list[str] = []
        self.levels: dict = {}
        # reports delivered to each leader since it last woke its cluster
        self.reports: dict = defaultdict(dict)
        self.open_elections: dict = {}
        self.elections_checked = 0
        self.quiescent_checks = 0
        self.departed: set = set()
        self._wakeups: set = set()
        # how often each race of interest actually happened
        self.seen: Counter = Counter()

    def _fail(self, sim, msg: str) -> None:
        self.violations.append(f"t={sim.queue.clock}: {msg}")

    def sent(self, sim, env, recipients) -> None:
        kind = env.kind
        if isinstance(kind, proto.WakeupElection):
            self.reports[env.src] = {}
            size = sim.states[env.src].cluster_size_known
            self.open_elections[env.src] = [0, 2 * size + 1]
        if isinstance(kind, proto.BatteryReport):
            leader = env.dst
            if leader in self.open_elections:
                self.open_elections[leader][0] += 1
        if isinstance(kind, proto.BaseMessage):
            n = len(kind.buffered_samples)
            cap = sim.states[env.src].buffer_capacity
            if n == 0 or n > cap:
                self._fail(sim, f"{env.src} flushed {n} samples with capacity {cap}")
            if env.payload_bytes != sim.scenario.payloads.size(kind):
                self._fail(sim, f"BaseMessage payload {env.payload_bytes} does not match {n} samples")
        if isinstance(kind, proto.ElectionMessage) and not kind.announce:
            self._check_election(sim, env)

    def _check_election(self, sim, env) -> None:
        kind = env.kind
        self.elections_checked += 1
        if not kind.ballot:
            self._fail(sim, f"{env.src} elected {kind.new_leader} from an empty ballot")
            return
        want = brute_force_winner(kind.ballot)
        if kind.new_leader != want:
            self._fail(sim, f"{env.src} elected {kind.new_leader}, argmax is {want}")
        got = self.reports.get(env.src, {})
        for level, d in kind.ballot:
            if d == env.src:
                continue
            if got.get(d) != level:
                self._fail(sim, f"ballot entry {d}={level} not matching delivered report {got.get(d)}")
        count = self.open_elections.pop(env.src, None)
        if count is not None:
            used, bound = count
            used += 2  # the wakeup and this announcement
            if used > bound:
                self._fail(sim, f"election by {env.src} used {used} envelopes, bound {bound}")

    def allow_extra(self, leader, n: int = 1) -> None:
        """Widen an open election's envelope bound for injected duplicates."""
        if leader in self.open_elections:
            self.open_elections[leader][1] += n

    def delivered(self, sim, env, dst) -> None:
        kind = env.kind
        st = sim.states[dst]
        if isinstance(kind, proto.BatteryReport):
            self.reports[dst][kind.id] = kind.level
        elif isinstance(kind, proto.LeaveMessage):
            if st.role is Role.LEADER and st.election_pending:
                self.seen["leave_during_election"] += 1
            if st.role is not Role.LEADER and kind.id == st.known_leader:
                self.seen["successor_left"] += 1
        elif isinstance(kind, proto.Data) and st.role is not Role.LEADER:
            self.seen["stale_data"] += 1
        elif isinstance(kind, proto.WakeupElection):
            key = (dst, env.src, env.send_time)
            if key in self._wakeups:
                self.seen["duplicate_wakeup"] += 1
            self._wakeups.add(key)

    def after_event(self, sim) -> None:
        for did, st in sim.states.items():
            if did in self.departed and st.role is not Role.DEPARTED:
                self._fail(sim, f"{did} came back after departing")
            elif st.role is Role.DEPARTED:
                self.departed.add(did)
            lvl = st.battery.level
            prev = self.levels.get(did)
            if prev is not None and lvl > prev:
                self._fail(sim, f"battery of {did} rose {prev} -> {lvl}")
            self.levels[did] = lvl
            if len(st.buffer) > st.buffer_capacity:
                self._fail(sim, f"{did} buffer {len(st.buffer)} over capacity")
            if st.role is not Role.LEADER and (st.buffer or st.pending_reports or st.election_pending):
                self._fail(sim, f"non-leader {did} holds leader-only state")
        if sim.scenario.config.mode.value == "baseline":
            return
        for cluster, members in sim.by_cluster.items():
            live = [sim.states[d] for d in members if sim.states[d].role is not Role.DEPARTED]
            if not live or sim.control_in_flight[cluster]:
                continue
            if any(s.election_pending or s.departing for s in live):
                continue
            if any(not s.initialized for s in live):
                continue
            self.quiescent_checks += 1
            leaders = [s.id for s in live if s.role is Role.LEADER]
            if len(leaders) != 1:
                self._fail(sim, f"cluster {cluster} has leaders {leaders} at quiescence")
                continue
            for s in live:
                if s.known_leader != leaders[0]:
                    self._fail(sim, f"{s.id} follows {s.known_leader}, leader is {leaders[0]}")

    def finish(self, trace) -> list[str]:
        if trace.stopped_by == "drained":
            for st in trace.final_states.values():
                if st.election_pending:
                    self.violations.append(f"election by {st.id} never completed")
        return self.violations
