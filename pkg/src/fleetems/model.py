"""Domain types and the geometry/threshold arithmetic shared across the package."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

# Energy is accounted in integer units so that drains sum exactly.
UNITS_PER_MJ = 10**9


def to_units(mj: float) -> int:
    return int(round(mj * UNITS_PER_MJ))


def to_mj(units: int) -> float:
    return units / UNITS_PER_MJ


def format_units(units: int) -> str:
    """Exact decimal millijoule string for an integer unit amount."""
    sign = "-" if units < 0 else ""
    q, r = divmod(abs(units), UNITS_PER_MJ)
    return f"{sign}{q}.{r:09d}"


class GeometryError(ValueError):
    pass


class DroneId(NamedTuple):
    """(cluster, member); tuple order is the protocol's "lowest id" order."""

    cluster: int
    member: int

    def __str__(self) -> str:
        return f"{self.cluster}.{self.member}"

    @classmethod
    def parse(cls, text: str) -> "DroneId":
        c, m = text.split(".")
        return cls(int(c), int(m))


@dataclass(frozen=True, slots=True)
class Position:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self!r}")
        if self.z < 0:
            raise ValueError(f"negative altitude {self.z}")


GBS_POSITION = Position(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class Battery:
    """Charge state in integer energy units (see ``UNITS_PER_MJ``).

    ``b0_at_election`` is the level snapshot taken when the drone last took
    over as leader; the election threshold is computed relative to it.
    """

    capacity_full: int
    level: int
    b0_at_election: int = 0

    def __post_init__(self):
        if not 0 <= self.level <= self.capacity_full:
            raise ValueError(f"battery level {self.level} outside [0, {self.capacity_full}]")
        if self.b0_at_election > self.capacity_full:
            raise ValueError("b0_at_election exceeds capacity")

    @classmethod
    def from_mj(cls, capacity: float, level: float | None = None, b0: float = 0.0) -> "Battery":
        cap = to_units(capacity)
        return cls(cap, cap if level is None else to_units(level), to_units(b0))

    @property
    def level_mj(self) -> float:
        return to_mj(self.level)


class Role(enum.Enum):
    LEADER = "Leader"
    MEMBER = "Member"
    DEPARTED = "Departed"


def check_threshold(t: float) -> float:
    if not 0 < t < 100:
        raise ValueError(f"threshold percent must lie in (0, 100), got {t}")
    return t


def distance(a: Position, b: Position) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def threshold_level(b0: float, t: float) -> float:
    """Battery level at which a leader hands over: ``b0 * (1 - t/100)``."""
    check_threshold(t)
    if b0 < 0:
        raise ValueError("b0 must be non-negative")
    return b0 * (100 - t) / 100


def leader_position(cluster_centroid: Position, gbs: Position) -> Position:
    """Midpoint between the cluster centroid and the ground station."""
    if cluster_centroid.z <= gbs.z:
        raise GeometryError(
            f"cluster centroid altitude {cluster_centroid.z} not above GBS altitude {gbs.z}"
        )
    return Position(
        (cluster_centroid.x + gbs.x) / 2,
        (cluster_centroid.y + gbs.y) / 2,
        (cluster_centroid.z + gbs.z) / 2,
    )


def centroid(points: list[Position]) -> Position:
    if not points:
        raise GeometryError("centroid of an empty point set")
    n = len(points)
    return Position(
        sum(p.x for p in points) / n,
        sum(p.y for p in points) / n,
        sum(p.z for p in points) / n,
    )
