"""Acceptance checks shared by the test suite and ``fleetems verify``.

Each check returns a ``CheckResult``; none of them raise on failure.
"""

from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import oracle
from . import protocol as proto
from .energy import EnergyModel
from .engine import Simulation
from .metrics.sweep import grid, run_one, sweep
from .safety import SafetyMonitor
from .scenario import Mode, ScenarioConfig, config_to_text, instantiate, parse_config_text


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


class Memo:
    """Caches run results by config so overlapping sweeps share runs."""

    def __init__(self):
        self.results: dict = {}

    def __call__(self, config: ScenarioConfig):
        key = config_to_text(config)
        if key not in self.results:
            self.results[key] = run_one(config)
        return self.results[key]


# -- 1. oracle --------------------------------------------------------------

def check_oracle() -> CheckResult:
    t0 = time.perf_counter()
    sim = Simulation(instantiate(oracle.CONFIG))
    problems = oracle.compare(sim.run())
    dt = time.perf_counter() - t0
    ok = not problems and dt < 1.0
    detail = f"{len(oracle.ROWS)} rows match" if not problems else "; ".join(problems[:3])
    return CheckResult("oracle equivalence", ok, f"{detail}, {dt:.3f}s (limit 1s)", dt)


# -- 2. conservation --------------------------------------------------------

def random_config(rng: np.random.Generator, **overrides) -> ScenarioConfig:
    """A small random scenario: n <= 3, m <= 6, at most 5000 ticks."""
    cfg = ScenarioConfig(
        clusters=int(rng.integers(1, 4)),
        drones_per_cluster=int(rng.integers(1, 7)),
        mode=Mode.LEADER if rng.random() < 0.7 else Mode.BASELINE,
        threshold=float(rng.choice([10, 20, 30, 40, 50, 60, 70, 80, 90])),
        buffer_capacity=int(rng.integers(1, 11)),
        cluster_radius=float(rng.uniform(0, 40)),
        battery_capacity=float(rng.uniform(2, 60)),
        battery_jitter_fraction=float(rng.uniform(0, 0.9)),
        energy=EnergyModel(
            e_elec=5e-5 * float(rng.uniform(0.5, 20)),
            e_amp=1e-7 * float(rng.uniform(0.5, 20)),
            idle_per_tick=float(rng.uniform(0, 0.05)),
            sense_per_sample=float(rng.uniform(0, 0.02)),
            critical_fraction=float(rng.uniform(0.01, 0.5)),
        ),
        seed=int(rng.integers(0, 2**63)),
        max_ticks=int(rng.integers(1, 5001)),
        election_timeout=int(rng.integers(3, 7)),
    )
    return replace(cfg, **overrides)


def check_conservation(n: int = 100, seed: int = 2024, simulation=None) -> CheckResult:
    """Initial minus final charge equals the ledger, exactly, on ``n`` random runs.

    ``simulation`` swaps in another engine class (used as a negative control).
    """
    simulation = simulation or Simulation
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    bad = []
    for i in range(n):
        cfg = random_config(rng)
        trace = simulation(instantiate(cfg)).run()
        drawn = trace.energy_drawn
        records = sum(r.amount for r in trace.ledger.records)
        per_drone = all(
            trace.initial_levels[d] - trace.final_states[d].battery.level
            == sum(r.amount for r in trace.ledger.records if r.drone == d)
            for d in trace.drones
        )
        if not (drawn == trace.ledger.total == records and per_drone):
            bad.append(i)
    dt = time.perf_counter() - t0
    ok = not bad and dt < 30.0
    detail = f"{n - len(bad)}/{n} runs balance exactly, {dt:.1f}s (limit 30s)"
    if bad:
        detail += f"; first imbalance in run {bad[0]}"
    return CheckResult("energy conservation", ok, detail, dt)


# -- 3-6. paper properties --------------------------------------------------

def check_lifetime(config: ScenarioConfig | None = None, reps: int = 10, factor: float = 1.2,
                   runner=None) -> CheckResult:
    config = config or ScenarioConfig()
    t0 = time.perf_counter()
    rows, _ = sweep(config, "threshold", [config.threshold], reps,
                    modes=(Mode.LEADER, Mode.BASELINE), runner=runner)
    by_mode = {r.mode: r.mean_cluster_lifetime for r in rows}
    lead, base = by_mode["leader"], by_mode["baseline"]
    ratio = lead / base if base else math.inf
    ok = lead > base and ratio >= factor
    detail = f"leader {lead:.1f} vs baseline {base:.1f} ticks, ratio {ratio:.3f} (floor {factor})"
    return CheckResult("lifetime advantage", ok, detail, time.perf_counter() - t0)


def check_fleet_size(config: ScenarioConfig | None = None, sizes=(2, 4, 8), reps: int = 10,
                     runner=None) -> CheckResult:
    config = config or ScenarioConfig()
    t0 = time.perf_counter()
    rows, _ = sweep(config, "fleet_size", sizes, reps, modes=(Mode.LEADER,), runner=runner)
    life = [r.mean_cluster_lifetime for r in rows]
    ok = all(a <= b for a, b in zip(life, life[1:]))
    detail = ", ".join(f"m={s}: {v:.1f}" for s, v in zip(sizes, life))
    return CheckResult("fleet-size monotonicity", ok, detail, time.perf_counter() - t0)


def threshold_rows(config: ScenarioConfig | None = None, thresholds=(20, 40, 60, 80),
                   reps: int = 10, runner=None):
    config = config or ScenarioConfig()
    rows, _ = sweep(config, "threshold", thresholds, reps, modes=(Mode.LEADER,), runner=runner)
    return rows


def check_election_count(rows) -> CheckResult:
    counts = [r.election_count_mean for r in rows]
    ok = all(a >= b for a, b in zip(counts, counts[1:]))
    detail = ", ".join(f"T={r.value:g}: {r.election_count_mean:.1f}" for r in rows)
    return CheckResult("election count vs threshold", ok, detail)


def check_death_time(rows, limit: float = 0.10) -> CheckResult:
    deaths = np.array([r.mean_death_time for r in rows])
    cv = float(deaths.std() / deaths.mean())
    ok = cv < limit
    detail = (", ".join(f"T={r.value:g}: {r.mean_death_time:.1f}" for r in rows)
              + f"; CV {cv:.2%} (limit {limit:.0%})")
    return CheckResult("death-time stability", ok, detail)


# -- 7. determinism ---------------------------------------------------------

def determinism_grid(config: ScenarioConfig, reps: int = 10) -> list[ScenarioConfig]:
    """Every run of the acceptance sweeps, built from ``config``."""
    runs = grid(config, "threshold", [config.threshold], reps, (Mode.LEADER, Mode.BASELINE))
    runs += grid(config, "threshold", [20, 40, 60, 80], reps, (Mode.LEADER,))
    runs += grid(config, "fleet_size", [2, 4, 8], reps, (Mode.LEADER,))
    seen, out = set(), []
    for *_, cfg in runs:
        key = config_to_text(cfg)
        if key not in seen:
            seen.add(key)
            out.append(cfg)
    return out


def _digests_in_subprocess(configs: list[ScenarioConfig]) -> list[str]:
    env = dict(os.environ, PYTHONHASHSEED="4242")
    payload = json.dumps([config_to_text(c) for c in configs])
    proc = subprocess.run(
        [sys.executable, "-m", "fleetems.checks"], input=payload, env=env,
        capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def check_determinism(config: ScenarioConfig | None = None, reps: int = 10, seed_shift: int = 0,
                      runner=None) -> CheckResult:
    """Run the grid here, then again in a fresh interpreter with another hash seed.

    ``seed_shift`` perturbs the second pass's seeds (negative control).
    """
    config = config or ScenarioConfig()
    runner = runner or run_one
    t0 = time.perf_counter()
    configs = determinism_grid(config, reps)
    first = [runner(c).digest for c in configs]
    second_cfgs = [replace(c, seed=(c.seed + seed_shift) % 2**64) for c in configs]
    second = _digests_in_subprocess(second_cfgs)
    mismatched = sum(a != b for a, b in zip(first, second))
    ok = mismatched == 0 and len(first) == len(second)
    detail = f"{len(configs) - mismatched}/{len(configs)} grid runs reproduce their trace hash"
    return CheckResult("determinism", ok, detail, time.perf_counter() - t0)


# -- 8. safety --------------------------------------------------------------

class DuplicatingMonitor(SafetyMonitor):
    """Delivers every WakeupElection twice."""

    def sent(self, sim, env, recipients) -> None:
        super().sent(sim, env, recipients)
        if isinstance(env.kind, proto.WakeupElection):
            for r in recipients:
                sim.inject(env, r)
            self.allow_extra(env.src, len(recipients))


def monitored_run(config: ScenarioConfig, monitor: SafetyMonitor | None = None):
    monitor = monitor or SafetyMonitor()
    trace = Simulation(instantiate(config), observer=monitor).run()
    return trace, monitor.finish(trace), monitor


# Scenarios that reliably exercise a given race; each names the witness
# counter that proves the race happened.
_RACE_BASE = ScenarioConfig(
    clusters=1, drones_per_cluster=4, threshold=50, buffer_capacity=3, cluster_radius=10.0,
    battery_capacity=30.0, battery_jitter_fraction=0.6,
    energy=EnergyModel(e_elec=5e-4, e_amp=1e-6, idle_per_tick=0.02, sense_per_sample=0.01,
                       critical_fraction=0.3),
    max_ticks=5000,
)
RACE_CASES = {
    "leave_during_election": (replace(_RACE_BASE, seed=2), SafetyMonitor),
    "duplicate_wakeup": (replace(_RACE_BASE, seed=0), DuplicatingMonitor),
    "stale_data": (replace(_RACE_BASE, seed=0), SafetyMonitor),
    # the new leader runs out before its ElectionMessage arrives
    "successor_left": (replace(_RACE_BASE, seed=8), SafetyMonitor),
}


def check_safety(n: int = 200, seed: int = 7) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    elections = 0
    for i in range(n):
        cfg = random_config(rng, mode=Mode.LEADER,
                            battery_capacity=float(rng.uniform(5, 300)),
                            drones_per_cluster=int(rng.integers(1, 9)))
        monitor = DuplicatingMonitor() if i % 4 == 3 else SafetyMonitor()
        _, violations, mon = monitored_run(cfg, monitor)
        elections += mon.elections_checked
        if violations:
            failures.append(f"random #{i}: {violations[0]}")
    for name, (cfg, monitor_cls) in RACE_CASES.items():
        _, violations, mon = monitored_run(cfg, monitor_cls())
        elections += mon.elections_checked
        if violations:
            failures.append(f"{name}: {violations[0]}")
        if not mon.seen[name]:
            failures.append(f"{name}: race never happened")
    ok = not failures
    detail = f"{n} random runs + {len(RACE_CASES)} race cases, {elections} elections checked"
    if failures:
        detail += f"; {len(failures)} failures, first: {failures[0]}"
    return CheckResult("protocol safety", ok, detail, time.perf_counter() - t0)


# -- all together -----------------------------------------------------------

CHECKS = ("oracle", "conservation", "lifetime", "fleet_size", "elections", "death_time",
          "determinism", "safety")


def run_checks(only=None, config: ScenarioConfig | None = None) -> list[CheckResult]:
    """Run the named checks (all by default) at the given base config."""
    wanted = list(only or CHECKS)
    unknown = [w for w in wanted if w not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(unknown)}")
    config = config or ScenarioConfig()
    memo = Memo()
    results = []
    trows = None
    for name in CHECKS:
        if name not in wanted:
            continue
        if name == "oracle":
            results.append(check_oracle())
        elif name == "conservation":
            results.append(check_conservation())
        elif name == "lifetime":
            results.append(check_lifetime(config, runner=memo))
        elif name == "fleet_size":
            results.append(check_fleet_size(config, runner=memo))
        elif name in ("elections", "death_time"):
            if trows is None:
                t0 = time.perf_counter()
                trows = threshold_rows(config, runner=memo)
                spent = time.perf_counter() - t0
            else:
                spent = 0.0
            res = check_election_count(trows) if name == "elections" else check_death_time(trows)
            res.seconds = spent
            results.append(res)
        elif name == "determinism":
            results.append(check_determinism(config, runner=memo))
        elif name == "safety":
            results.append(check_safety())
    return results


def _digest_worker() -> None:
    texts = json.loads(sys.stdin.read())
    out = [run_one(parse_config_text(t)).digest for t in texts]
    sys.stdout.write(json.dumps(out))


if __name__ == "__main__":
    _digest_worker()
