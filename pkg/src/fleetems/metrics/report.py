"""Per-run metrics computed from trace rows."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from ..model import DroneId

GBS_NAME = "GBS"


@dataclass
class MetricsReport:
    cluster_lifetime: dict[int, int | None]
    censored: dict[int, bool]
    death_time: dict[DroneId, int]
    messages_by_kind: dict[str, int]
    election_count: int
    events_total: int
    drops: int
    deliveries: int
    events_at_death: dict[DroneId, int] = field(default_factory=dict)

    @property
    def mean_cluster_lifetime(self) -> float:
        """Mean over clusters whose last drone departed; NaN if none did."""
        done = [v for v in self.cluster_lifetime.values() if v is not None]
        return sum(done) / len(done) if done else math.nan

    @property
    def mean_death_time(self) -> float:
        if not self.death_time:
            return math.nan
        return sum(self.death_time.values()) / len(self.death_time)

    @property
    def messages_total(self) -> int:
        return sum(self.messages_by_kind.values())

    @property
    def any_censored(self) -> bool:
        return any(self.censored.values())


class MetricsAccumulator:
    """Streams trace rows ``(time, drone, label, emitted)`` into a report.

    The engine feeds rows as it produces them; ``aggregate`` replays stored
    rows through the same code, so both paths agree by construction.
    """

    def __init__(self):
        self.death_time: dict[DroneId, int] = {}
        self.events_at_death: dict[DroneId, int] = {}
        self.per_drone: dict = defaultdict(int)
        self.messages_by_kind: dict[str, int] = defaultdict(int)
        self.election_count = 0
        self.events_total = 0
        self.drops = 0
        self.deliveries = 0

    def feed(self, row: tuple) -> None:
        time, drone, label, _ = row
        if label.startswith("drop:"):
            self.messages_by_kind[label[5:]] += 1
            self.drops += 1
            return
        if label.startswith("recv:"):
            self.messages_by_kind[label[5:]] += 1
            self.deliveries += 1
        if isinstance(drone, str):  # the ground station
            return
        self.events_total += 1
        self.per_drone[drone] += 1
        if label == "elect":
            self.election_count += 1
        elif label == "depart":
            self.death_time[drone] = time
            self.events_at_death[drone] = self.per_drone[drone]

    def report(self, drones: list[DroneId]) -> MetricsReport:
        clusters: dict[int, list[DroneId]] = defaultdict(list)
        for d in drones:
            clusters[d.cluster].append(d)
        lifetime, censored = {}, {}
        for c, members in sorted(clusters.items()):
            if all(d in self.death_time for d in members):
                lifetime[c] = max(self.death_time[d] for d in members)
                censored[c] = False
            else:
                lifetime[c] = None
                censored[c] = True
        return MetricsReport(
            cluster_lifetime=lifetime,
            censored=censored,
            death_time=dict(self.death_time),
            messages_by_kind=dict(self.messages_by_kind),
            election_count=self.election_count,
            events_total=self.events_total,
            drops=self.drops,
            deliveries=self.deliveries,
            events_at_death=dict(self.events_at_death),
        )


def aggregate(trace) -> MetricsReport:
    """Recompute the metrics report from a trace's stored rows."""
    if trace.rows is None:
        raise ValueError("trace was recorded without rows; use trace.report")
    acc = MetricsAccumulator()
    for row in trace.rows:
        acc.feed(row)
    return acc.report(trace.drones)
