"""The safety monitor must catch each kind of violation it claims to check."""

from dataclasses import replace

import pytest

from fleetems import protocol as proto
from fleetems.checks import RACE_CASES, DuplicatingMonitor, check_safety, monitored_run
from fleetems.model import DroneId, Role
from fleetems.safety import SafetyMonitor, brute_force_winner
from fleetems.scenario import ScenarioConfig

CFG = ScenarioConfig(clusters=1, drones_per_cluster=4, battery_capacity=40.0, max_ticks=5000, seed=5)
A, B, C = DroneId(0, 0), DroneId(0, 1), DroneId(0, 2)


def test_brute_force_winner():
    assert brute_force_winner([(5, B), (9, C), (9, A)]) == A
    assert brute_force_winner([(1, C)]) == C


def test_clean_run_has_no_violations():
    _, violations, mon = monitored_run(CFG)
    assert violations == []
    assert mon.elections_checked > 0 and mon.quiescent_checks > 0


def test_wrong_winner_is_flagged(monkeypatch):
    def worst(reports, self_level, self_id):
        ballot = [(r.level, r.id) for r in reports]
        if self_level is not None:
            ballot.append((self_level, self_id))
        return min(ballot)[1]
    monkeypatch.setattr(proto, "select_gbest", worst)
    _, violations, _ = monitored_run(CFG)
    assert any("argmax is" in v for v in violations)


class Saboteur(SafetyMonitor):
    """Corrupts the simulation once at ``when`` so the monitor has something to find."""

    def __init__(self, when, act):
        super().__init__()
        self.when, self.act, self.done = when, act, False

    def after_event(self, sim):
        if not self.done and self.when(sim):
            self.act(sim)
            self.done = True
        super().after_event(sim)


def test_resurrection_is_flagged():
    def revive(sim):
        dead = next(d for d, s in sim.states.items() if s.role is Role.DEPARTED)
        sim.states[dead] = sim.states[dead].evolve(role=Role.MEMBER)
    seen_dead = set()

    def later(sim):
        gone = {d for d, s in sim.states.items() if s.role is Role.DEPARTED}
        ready = bool(seen_dead & gone)
        seen_dead.update(gone)
        return ready
    mon = Saboteur(later, revive)
    # the corrupted state may also trip the protocol later on; the monitor has to see it first
    with pytest.raises(proto.ProtocolError):
        monitored_run(CFG, mon)
    assert any("came back" in v for v in mon.violations)


def test_second_leader_is_flagged():
    def promote(sim):
        sim.states[C] = sim.states[C].evolve(role=Role.LEADER, known_leader=C)
    _, violations, _ = monitored_run(CFG, Saboteur(lambda sim: sim.queue.clock >= 50, promote))
    assert any("at quiescence" in v for v in violations)


def test_overfull_buffer_is_flagged():
    def stuff(sim):
        st = sim.states[A]
        sim.states[A] = st.evolve(buffer=tuple(st.buffer) + ((A, -1),) * (st.buffer_capacity + 1))
    _, violations, _ = monitored_run(CFG, Saboteur(lambda sim: sim.queue.clock >= 5, stuff))
    assert any("over capacity" in v for v in violations)


def test_duplicate_wakeups_are_tolerated():
    _, violations, mon = monitored_run(CFG, DuplicatingMonitor())
    assert violations == [] and mon.seen["duplicate_wakeup"] > 0


@pytest.mark.parametrize("name", sorted(RACE_CASES))
def test_race_case_happens_and_is_safe(name):
    cfg, monitor_cls = RACE_CASES[name]
    _, violations, mon = monitored_run(cfg, monitor_cls())
    assert mon.seen[name] > 0, f"{name} was not exercised"
    assert violations == []


def test_race_cases_survive_other_seeds():
    base, _ = RACE_CASES["leave_during_election"]
    for seed in range(20):
        for monitor in (SafetyMonitor(), DuplicatingMonitor()):
            _, violations, _ = monitored_run(replace(base, seed=seed), monitor)
            assert violations == [], (seed, violations)


def test_small_safety_check_passes():
    res = check_safety(n=20, seed=1)
    assert res.passed, res.detail
