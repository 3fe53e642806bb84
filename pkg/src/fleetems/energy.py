"""First-order radio model, housekeeping drains and the drain ledger."""

from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass, replace

from .model import Battery, DroneId, format_units


@dataclass(frozen=True)
class EnergyModel:
    """Per-byte radio coefficients plus idle and sensing drains (all in mJ).

    Transmit cost is ``payload * (e_elec + e_amp * d**2)``; receive cost is
    ``payload * e_elec``.
    """

    e_elec: float = 5.0e-5
    e_amp: float = 1.0e-7
    idle_per_tick: float = 0.02
    sense_per_sample: float = 0.01
    critical_fraction: float = 0.05

    def __post_init__(self):
        for name in ("e_elec", "e_amp", "idle_per_tick", "sense_per_sample"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.critical_fraction < 1:
            raise ValueError("critical_fraction must lie in (0, 1)")


def tx_cost(model: EnergyModel, payload: int, d: float) -> float:
    if payload <= 0 or d < 0:
        raise ValueError("payload must be positive and distance non-negative")
    return payload * (model.e_elec + model.e_amp * d * d)


def rx_cost(model: EnergyModel, payload: int) -> float:
    if payload <= 0:
        raise ValueError("payload must be positive")
    return payload * model.e_elec


def idle_cost(model: EnergyModel, ticks: int) -> float:
    if ticks < 0:
        raise ValueError("ticks must be >= 0")
    return ticks * model.idle_per_tick


def is_depleted(battery: Battery, critical_fraction: float) -> bool:
    return battery.level <= critical_fraction * battery.capacity_full


def apply_drain(battery: Battery, amount: int, critical_fraction: float) -> tuple[Battery, bool]:
    """Saturating drain of ``amount`` integer units.

    Returns the new battery and whether it is now at or below the critical
    level. The amount actually removed is ``old.level - new.level``.
    """
    if amount < 0:
        raise ValueError("drain amount must be >= 0")
    new = replace(battery, level=max(0, battery.level - amount))
    return new, is_depleted(new, critical_fraction)


class Cause(enum.Enum):
    TX = "Tx"
    RX = "Rx"
    IDLE = "Idle"
    SENSE = "Sense"


@dataclass(frozen=True, slots=True)
class DrainRecord:
    time: int
    drone: DroneId
    cause: Cause
    amount: int  # integer units

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError("negative drain record")


LEDGER_HEADER = ("time", "drone", "cause", "amount_mj")


class Ledger:
    """Append-only record of every energy drain in one run.

    With ``keep_records=False`` only the integer totals are kept, which is
    enough for the conservation check on long runs.
    """

    def __init__(self, keep_records: bool = True):
        self.keep_records = keep_records
        self.records: list[DrainRecord] = []
        self.total = 0
        self.by_cause: dict[str, int] = defaultdict(int)

    def append(self, time: int, drone: DroneId, cause: Cause, amount: int) -> None:
        if amount < 0:
            raise ValueError("negative drain")
        if self.keep_records:
            self.records.append(DrainRecord(time, drone, cause, amount))
        self.total += amount
        self.by_cause[cause.value] += amount

    def __len__(self):
        return len(self.records)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_HEADER)
        for r in self.records:
            w.writerow((r.time, str(r.drone), r.cause.value, format_units(r.amount)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()
