"""Property tests for the invariants of the model, energy, protocol and engine."""

import math

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from fleetems import protocol as proto
from fleetems.checks import DuplicatingMonitor, monitored_run
from fleetems.energy import EnergyModel, apply_drain, tx_cost
from fleetems.engine import run
from fleetems.model import Battery, DroneId, Position, distance, leader_position, threshold_level
from fleetems.safety import brute_force_winner
from fleetems.scenario import Mode, ScenarioConfig, config_to_text, instantiate, parse_config_text

coord = st.floats(-1e4, 1e4, allow_nan=False)
positions = st.builds(Position, coord, coord, st.floats(0, 1e4))
percent = st.floats(0.01, 99.99)
SLOW = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@given(positions, positions, positions)
def test_distance_is_a_metric(a, b, c):
    assert distance(a, b) == distance(b, a)
    assert distance(a, a) == 0
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-6


@given(st.floats(1e-3, 1e6), percent, st.floats(0.1, 100))
def test_threshold_level_below_b0_and_linear(b0, t, k):
    assert threshold_level(b0, t) < b0
    assert math.isclose(threshold_level(k * b0, t), k * threshold_level(b0, t), rel_tol=1e-9)


@given(st.floats(1e-3, 1e6), percent, percent)
def test_threshold_level_decreases_in_t(b0, t1, t2):
    lo, hi = sorted((t1, t2))
    assert threshold_level(b0, hi) <= threshold_level(b0, lo)


@given(coord, coord, st.floats(1, 1e4))
def test_leader_position_equidistant(x, y, z):
    c, g = Position(x, y, z), Position(0, 0, 0)
    p = leader_position(c, g)
    assert math.isclose(distance(p, c), distance(p, g), rel_tol=1e-9, abs_tol=1e-9)


@given(st.integers(1, 4096), st.integers(1, 4096), st.floats(0, 1e3), st.floats(0, 1e3))
def test_tx_cost_monotone(p1, p2, d1, d2):
    m = EnergyModel()
    (pa, pb), (da, db) = sorted((p1, p2)), sorted((d1, d2))
    assert tx_cost(m, pa, da) <= tx_cost(m, pb, da) <= tx_cost(m, pb, db)


@given(st.integers(0, 10**12), st.integers(0, 10**12), st.floats(0.01, 0.99))
def test_drain_never_negative(level, amount, crit):
    b = Battery(10**12, level)
    new, depleted = apply_drain(b, amount, crit)
    assert 0 <= new.level <= b.level
    assert b.level - new.level == min(amount, level)
    assert depleted == (new.level <= crit * b.capacity_full)


ballots = st.lists(st.integers(0, 5), min_size=1, max_size=7)


@given(ballots, st.booleans())
def test_gbest_matches_brute_force(levels, include_self):
    ids = [DroneId(0, i) for i in range(len(levels))]
    reports = [proto.BatteryReport(d, 0, lv) for d, lv in zip(ids[1:], levels[1:])]
    ballot = [(lv, d) for d, lv in zip(ids, levels)]
    if include_self:
        assert proto.select_gbest(reports, levels[0], ids[0]) == brute_force_winner(ballot)
    elif reports:
        assert proto.select_gbest(reports, None, ids[0]) == brute_force_winner(ballot[1:])


@st.composite
def scenarios(draw, mode=None):
    return ScenarioConfig(
        clusters=draw(st.integers(1, 3)),
        drones_per_cluster=draw(st.integers(1, 6)),
        mode=mode or draw(st.sampled_from(list(Mode))),
        threshold=draw(st.sampled_from([10, 25, 40, 60, 75, 90])),
        buffer_capacity=draw(st.integers(1, 10)),
        cluster_radius=draw(st.floats(0, 40)),
        battery_capacity=draw(st.floats(2, 80)),
        battery_jitter_fraction=draw(st.floats(0, 0.9)),
        energy=EnergyModel(
            e_elec=draw(st.floats(1e-5, 1e-3)),
            e_amp=draw(st.floats(1e-8, 2e-6)),
            idle_per_tick=draw(st.floats(0, 0.05)),
            sense_per_sample=draw(st.floats(0, 0.02)),
            critical_fraction=draw(st.floats(0.01, 0.5)),
        ),
        seed=draw(st.integers(0, 2**64 - 1)),
        max_ticks=draw(st.integers(1, 3000)),
        election_timeout=draw(st.integers(3, 6)),
    )


@SLOW
@given(scenarios())
def test_conservation_is_exact(cfg):
    trace = run(instantiate(cfg))
    assert trace.energy_drawn == trace.ledger.total == sum(r.amount for r in trace.ledger.records)


@SLOW
@given(scenarios())
def test_runs_are_deterministic(cfg):
    a = run(instantiate(cfg), keep_rows=False, keep_ledger=False)
    b = run(instantiate(cfg), keep_rows=False, keep_ledger=False)
    assert a.digest == b.digest


@SLOW
@given(scenarios(mode=Mode.LEADER), st.booleans())
def test_protocol_safety(cfg, duplicate_wakeups):
    monitor = DuplicatingMonitor() if duplicate_wakeups else None
    trace, violations, _ = monitored_run(cfg, monitor)
    assert violations == []
    # departed is absorbing: nothing but a drop row after a drone's depart row
    gone = set()
    for _, drone, label, emitted in trace.rows:
        if drone in gone:
            assert label.startswith("drop:") and emitted == 0
        if label == "depart":
            gone.add(drone)


@SLOW
@given(scenarios())
def test_config_text_round_trips(cfg):
    assert parse_config_text(config_to_text(cfg)) == cfg
