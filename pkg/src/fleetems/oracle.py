"""Hand-derived reference run for a one-cluster, two-drone fleet.

Both drones sit at (0, 0, 100) with the ground station at the origin, so
the leader hovers at (0, 0, 50), 50 m from everything else. With
``e_elec = 0.005`` and ``e_amp = 1e-5`` a transmitted byte costs 0.03 mJ
and a received byte 0.005 mJ (a hop of 0 m costs 0.005 mJ per byte
either way):

    Init rx 0.08 | ElectionMessage tx 0.48 rx 0.08 | Data tx 1.92 rx 0.32
    BaseMessage(2) tx 4.80 | WakeupElection tx 0.48 rx 0.08
    BatteryReport tx 0.72 rx 0.12

Capacity 20 mJ, critical level 5 mJ (25 %), threshold 50 %, buffer of 2,
no idle or sensing drain. Drone A = 0.0 leads first; it crosses its
threshold at t=2, runs out during the election at t=3 and hands over to B
at t=4. A then stays in range for three ticks in case B dies before taking
office, relaying stale Data meanwhile, and departs at t=7. B leads alone,
runs out at t=6 and departs.

The rows below were worked out by hand from the protocol rules, not by
running the engine.
"""

from __future__ import annotations

from .energy import EnergyModel
from .model import DroneId, to_units
from .scenario import ScenarioConfig

A = DroneId(0, 0)
B = DroneId(0, 1)
GBS = "GBS"

CONFIG = ScenarioConfig(
    clusters=1,
    drones_per_cluster=2,
    threshold=50,
    buffer_capacity=2,
    altitude=100.0,
    cluster_radius=0.0,
    cluster_spacing=0.0,
    battery_capacity=20.0,
    battery_jitter_fraction=0.0,
    energy=EnergyModel(e_elec=0.005, e_amp=1e-5, idle_per_tick=0.0,
                       sense_per_sample=0.0, critical_fraction=0.25),
    seed=0,
    max_ticks=100,
)

# (time, drone, label, emitted)
ROWS = [
    # t=0: Init reaches both; A takes the lead and announces itself.
    (0, A, "recv:Init", 1),          # A 20 -0.08 rx -0.48 tx = 19.44, b0 = 19.92
    (0, B, "recv:Init", 0),          # B 19.92, waits for a leader
    (0, A, "tick", 0),               # A buffer [A0]
    (0, B, "tick", 0),               # no leader known yet: no sample
    # t=1
    (1, B, "recv:ElectionMessage", 0),  # B 19.84, leader = A
    (1, A, "tick", 1),               # buffer full: BaseMessage(2), A 14.64
    (1, B, "tick", 1),               # Data -> A, B 17.92
    # t=2
    (2, GBS, "recv:BaseMessage", 0),
    (2, A, "recv:Data", 0),          # A 14.32, buffer [B1]
    (2, A, "tick", 1),               # flush, A 9.52 < 19.92/2 = 9.96
    (2, A, "threshold", 1),          # WakeupElection broadcast, A 9.04
    (2, B, "tick", 1),               # Data -> A, B 16.00
    # t=3
    (3, GBS, "recv:BaseMessage", 0),
    (3, B, "recv:WakeupElection", 1),  # B 15.92, reports 15.92, B 15.20
    (3, A, "recv:Data", 0),          # A 8.72, buffer [B2]
    (3, A, "tick", 1),               # flush, A 3.92 <= 5: critical
    (3, A, "depleted", 0),           # election already running: just marks departing
    (3, B, "tick", 1),               # Data -> A, B 13.28
    # t=4
    (4, A, "recv:BatteryReport", 1),  # A 3.80; only candidate is B
    (4, A, "elect", 1),              # back home, ElectionMessage(B) over 0 m, A 3.72
    (4, GBS, "recv:BaseMessage", 0),
    (4, A, "recv:Data", 1),          # A 3.40, stale: forwarded to B over 0 m, A 3.08
    (4, A, "tick", 0),               # handoff watch runs to t=7
    (4, B, "tick", 1),               # B still thinks A leads: Data -> A over 0 m, B 12.96
    # t=5
    (5, B, "recv:ElectionMessage", 0),  # B 12.88, leader at (0, 0, 50), b0 = 12.88
    (5, B, "recv:Data", 0),          # B 12.56, buffer [B3]
    (5, A, "recv:Data", 1),          # A 2.76, forwards B4 over 50 m, A 0.84
    (5, A, "tick", 0),
    (5, B, "tick", 1),               # flush, B 7.76
    # t=6
    (6, B, "recv:Data", 0),          # B 7.44, buffer [B4]
    (6, GBS, "recv:BaseMessage", 0),
    (6, A, "tick", 0),
    (6, B, "tick", 1),               # flush, B 2.64 <= 5
    (6, B, "depart", 0),             # alone: nobody to hand over to
    # t=7
    (7, GBS, "recv:BaseMessage", 0),
    (7, A, "tick", 0),               # handoff watch over
    (7, A, "depart", 0),
]

# (time, drone, cause, mJ)
LEDGER = [
    (0, A, "Rx", "0.08"), (0, A, "Tx", "0.48"), (0, B, "Rx", "0.08"),
    (1, B, "Rx", "0.08"), (1, A, "Tx", "4.80"), (1, B, "Tx", "1.92"),
    (2, A, "Rx", "0.32"), (2, A, "Tx", "4.80"), (2, A, "Tx", "0.48"), (2, B, "Tx", "1.92"),
    (3, B, "Rx", "0.08"), (3, B, "Tx", "0.72"), (3, A, "Rx", "0.32"), (3, A, "Tx", "4.80"),
    (3, B, "Tx", "1.92"),
    (4, A, "Rx", "0.12"), (4, A, "Tx", "0.08"), (4, A, "Rx", "0.32"), (4, A, "Tx", "0.32"),
    (4, B, "Tx", "0.32"),
    (5, B, "Rx", "0.08"), (5, B, "Rx", "0.32"), (5, A, "Rx", "0.32"), (5, A, "Tx", "1.92"),
    (5, B, "Tx", "4.80"),
    (6, B, "Rx", "0.32"), (6, B, "Tx", "4.80"),
]

FINAL_LEVELS = {A: "0.84", B: "2.64"}
DEATH_TIME = {A: 7, B: 6}
CLUSTER_LIFETIME = {0: 7}
ELECTION_COUNT = 1
DROPS = 0
EVENTS_TOTAL = 32
MESSAGES_BY_KIND = {
    "Init": 2, "ElectionMessage": 2, "Data": 6, "BaseMessage": 5,
    "WakeupElection": 1, "BatteryReport": 1,
}


def ledger_units() -> list[tuple]:
    return [(t, d, cause, to_units(float(mj))) for t, d, cause, mj in LEDGER]


def compare(trace) -> list[str]:
    """Differences between a trace of ``CONFIG`` and the reference; empty if equal."""
    problems = []
    rows = list(trace.rows)
    if rows != ROWS:
        for i, (got, want) in enumerate(zip(rows, ROWS)):
            if got != want:
                problems.append(f"row {i}: got {got}, expected {want}")
                break
        if len(rows) != len(ROWS):
            problems.append(f"{len(rows)} rows, expected {len(ROWS)}")
    got_ledger = [(r.time, r.drone, r.cause.value, r.amount) for r in trace.ledger.records]
    if got_ledger != ledger_units():
        problems.append(f"ledger differs: {got_ledger}")
    for d, mj in FINAL_LEVELS.items():
        if trace.final_states[d].battery.level != to_units(float(mj)):
            problems.append(f"final level of {d}: {trace.final_states[d].battery.level}")
    r = trace.report
    expected = {
        "death_time": DEATH_TIME, "cluster_lifetime": CLUSTER_LIFETIME,
        "election_count": ELECTION_COUNT, "drops": DROPS,
        "events_total": EVENTS_TOTAL, "messages_by_kind": MESSAGES_BY_KIND,
    }
    for name, want in expected.items():
        if getattr(r, name) != want:
            problems.append(f"{name}: got {getattr(r, name)}, expected {want}")
    return problems
