"""Parameter sweeps over threshold or fleet size, in one or both modes."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..scenario import Mode, ScenarioConfig

SWEEP_HEADER = (
    "axis", "value", "mode", "mean_cluster_lifetime", "std_cluster_lifetime",
    "mean_death_time", "election_count_mean", "messages_total_mean", "drops_mean",
)
AXES = {"threshold": 0, "fleet_size": 1}


@dataclass(frozen=True)
class RunResult:
    digest: str
    lifetime: float        # NaN when any cluster outlived max_ticks
    mean_death_time: float
    election_count: int
    messages_total: int
    drops: int


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    mode: str
    mean_cluster_lifetime: float
    std_cluster_lifetime: float
    mean_death_time: float
    election_count_mean: float
    messages_total_mean: float
    drops_mean: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, k) for k in SWEEP_HEADER)


def run_one(config: ScenarioConfig) -> RunResult:
    from ..engine import run
    from ..scenario import instantiate

    trace = run(instantiate(config), keep_rows=False, keep_ledger=False)
    r = trace.report
    lifetime = math.nan if r.any_censored else r.mean_cluster_lifetime
    return RunResult(trace.digest, lifetime, r.mean_death_time, r.election_count,
                     r.messages_total, r.drops)


def derive_seed(base_seed: int, axis: str, value: float, rep: int) -> int:
    """64-bit run seed from (base seed, axis, value, repetition); mode is left out
    so that both modes see the same fleets."""
    key = int(round(float(value) * 1000))
    ss = np.random.SeedSequence([base_seed, AXES[axis], key, rep])
    return int(ss.generate_state(1, np.uint64)[0])


def apply_axis(config: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "threshold":
        return replace(config, threshold=float(value))
    if axis == "fleet_size":
        if float(value) != int(value):
            raise ValueError(f"fleet size must be a whole number, got {value}")
        return replace(config, drones_per_cluster=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")


def grid(config: ScenarioConfig, axis: str, values, repetitions: int, modes) -> list[tuple]:
    """Every run of a sweep as ``(value, mode, rep, config)``."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one axis value")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    modes = [Mode(m) for m in modes]
    if not modes:
        raise ValueError("sweep needs at least one mode")
    runs = []
    for value in values:
        for mode in modes:
            for rep in range(repetitions):
                cfg = replace(apply_axis(config, axis, value), mode=mode,
                              seed=derive_seed(config.seed, axis, value, rep))
                runs.append((value, mode, rep, cfg))
    return runs


def _summarise(axis: str, value, mode: Mode, results: list[RunResult]) -> SweepRow:
    life = np.array([r.lifetime for r in results], dtype=float)
    return SweepRow(
        axis=axis,
        value=value,
        mode=mode.value,
        mean_cluster_lifetime=float(life.mean()),
        std_cluster_lifetime=float(life.std(ddof=1)) if len(life) > 1 else 0.0,
        mean_death_time=float(np.mean([r.mean_death_time for r in results])),
        election_count_mean=float(np.mean([r.election_count for r in results])),
        messages_total_mean=float(np.mean([r.messages_total for r in results])),
        drops_mean=float(np.mean([r.drops for r in results])),
    )


def sweep(config: ScenarioConfig, axis: str, values, repetitions: int,
          modes=(Mode.LEADER, Mode.BASELINE), workers: int = 1, runner=None):
    """Run the grid and return ``(rows, results)``.

    ``results`` maps ``(value, mode, rep)`` to each run's ``RunResult``.
    ``runner`` replaces ``run_one`` (e.g. to memoise); ``workers > 1`` fans
    runs out to processes and is ignored when a runner is given.
    """
    runs = grid(config, axis, values, repetitions, modes)
    configs = [cfg for *_, cfg in runs]
    if runner is not None:
        outcomes = [runner(cfg) for cfg in configs]
    elif workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, configs))
    else:
        outcomes = [run_one(cfg) for cfg in configs]
    results = {(v, m, rep): res for (v, m, rep, _), res in zip(runs, outcomes)}
    rows = []
    seen = []
    for v, m, _, _ in runs:
        if (v, m) not in seen:
            seen.append((v, m))
    for v, m in seen:
        batch = [res for (v2, m2, _), res in results.items() if v2 == v and m2 == m]
        rows.append(_summarise(axis, v, m, batch))
    return rows, results


def write_csv(rows: list[SweepRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow(row.as_tuple())


def to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()
