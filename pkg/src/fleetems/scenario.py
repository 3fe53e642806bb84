"""Scenario configuration, topology construction and mode wiring."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import protocol as proto
from .energy import EnergyModel, is_depleted
from .model import GBS_POSITION, Battery, DroneId, Position, Role, check_threshold, to_units


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending setting when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class Mode(enum.Enum):
    LEADER = "leader"
    BASELINE = "baseline"


@dataclass(frozen=True)
class ScenarioConfig:
    clusters: int = 2
    drones_per_cluster: int = 6
    mode: Mode = Mode.LEADER
    threshold: float = 60
    buffer_capacity: int = 10
    altitude: float = 100.0
    cluster_radius: float = 20.0
    cluster_spacing: float = 100.0
    battery_capacity: float = 5000.0
    battery_jitter_fraction: float = 0.1
    energy: EnergyModel = field(default_factory=EnergyModel)
    payload_overrides: dict | None = None
    seed: int = 0
    max_ticks: int = 1_000_000
    election_timeout: int = 4

    def __post_init__(self):
        if self.clusters < 1:
            raise ConfigError("clusters must be >= 1", "clusters")
        if self.drones_per_cluster < 1:
            raise ConfigError("drones_per_cluster must be >= 1", "drones_per_cluster")
        if self.max_ticks < 1:
            raise ConfigError("max_ticks must be >= 1", "max_ticks")
        if self.cluster_radius < 0:
            raise ConfigError("cluster_radius must be >= 0", "cluster_radius")
        if self.buffer_capacity < 1:
            raise ConfigError("buffer_capacity must be >= 1", "buffer_capacity")
        if self.altitude <= 0:
            raise ConfigError("altitude must be > 0", "altitude")
        if self.battery_capacity < 0:
            raise ConfigError("battery_capacity must be >= 0", "battery_capacity")
        if not 0 <= self.battery_jitter_fraction < 1:
            raise ConfigError("battery_jitter_fraction must lie in [0, 1)", "battery_jitter_fraction")
        # a wakeup/report round trip can span three ticks
        if self.election_timeout < 3:
            raise ConfigError("election_timeout must be >= 3", "election_timeout")
        try:
            check_threshold(self.threshold)
        except ValueError as exc:
            raise ConfigError(str(exc), "threshold") from None
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", "seed")

    @property
    def payloads(self) -> proto.PayloadTable:
        return proto.PayloadTable(**(self.payload_overrides or {}))


# -- key = value configuration files -----------------------------------------

_SCALAR_TYPES = {
    "clusters": int,
    "drones_per_cluster": int,
    "mode": Mode,
    "threshold": float,
    "buffer_capacity": int,
    "altitude": float,
    "cluster_radius": float,
    "cluster_spacing": float,
    "battery_capacity": float,
    "battery_jitter_fraction": float,
    "seed": int,
    "max_ticks": int,
    "election_timeout": int,
}
_ENERGY_KEYS = {f.name for f in fields(EnergyModel)}
_PAYLOAD_KEYS = {f.name for f in fields(proto.PayloadTable)}


def _parse_value(key: str, raw: str):
    if key.startswith("energy."):
        caster = float
    elif key.startswith("payload_overrides."):
        caster = int
    else:
        caster = _SCALAR_TYPES[key]
    try:
        if caster is int:
            return int(raw, 0)
        if caster is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        return caster(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}", key) from None


def _known(key: str) -> bool:
    if key in _SCALAR_TYPES:
        return True
    head, _, tail = key.partition(".")
    return (head == "energy" and tail in _ENERGY_KEYS) or (
        head == "payload_overrides" and tail in _PAYLOAD_KEYS)


def parse_assignments(pairs: list[tuple[str, str]], base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Apply ``(key, raw value)`` pairs in order over ``base``; last write wins."""
    base = base or ScenarioConfig()
    top: dict = {}
    energy: dict = {}
    payloads: dict = dict(base.payload_overrides or {})
    for key, raw in pairs:
        if not _known(key):
            raise ConfigError(f"unknown configuration key: {key}", key)
        value = _parse_value(key, raw)
        if key.startswith("energy."):
            energy[key[7:]] = value
        elif key.startswith("payload_overrides."):
            payloads[key[18:]] = value
        else:
            top[key] = value
    try:
        if energy:
            top["energy"] = replace(base.energy, **energy)
        if payloads:
            top["payload_overrides"] = payloads
            proto.PayloadTable(**payloads)
        return replace(base, **top)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}", line)
        pairs.append((key.strip(), value.strip()))
    return parse_assignments(pairs, base)


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def config_to_text(config: ScenarioConfig) -> str:
    """Render every setting, including defaults, as a loadable config file."""
    lines = []
    for key in _SCALAR_TYPES:
        value = getattr(config, key)
        text = value.value if isinstance(value, Mode) else repr(value)
        lines.append(f"{key} = {text}")
    for f in fields(EnergyModel):
        lines.append(f"energy.{f.name} = {getattr(config.energy, f.name)!r}")
    for key, value in sorted((config.payload_overrides or {}).items()):
        lines.append(f"payload_overrides.{key} = {value}")
    return "\n".join(lines) + "\n"


# -- topology ----------------------------------------------------------------

@dataclass
class Topology:
    clusters: list[list[DroneId]]
    positions: dict[DroneId, Position]
    levels: dict[DroneId, int]
    capacity: int
    links: set[frozenset]


def cluster_center(config: ScenarioConfig, c: int) -> Position:
    return Position(config.cluster_spacing * (c + 1), 0.0, config.altitude)


def build_topology(config: ScenarioConfig) -> Topology:
    """Place ``drones_per_cluster`` drones per cluster and wire each cluster as a clique.

    Positions are uniform over a horizontal disc around each cluster centre;
    initial charge is ``capacity * (1 - jitter * u)``. Both draw from one
    seeded generator in a mode-independent order.
    """
    rng = np.random.default_rng(config.seed)
    clusters: list[list[DroneId]] = []
    positions: dict[DroneId, Position] = {}
    for c in range(config.clusters):
        center = cluster_center(config, c)
        members = []
        for m in range(config.drones_per_cluster):
            r = config.cluster_radius * math.sqrt(rng.random())
            theta = 2 * math.pi * rng.random()
            did = DroneId(c, m)
            positions[did] = Position(
                center.x + r * math.cos(theta), center.y + r * math.sin(theta), center.z)
            members.append(did)
        clusters.append(members)
    capacity = to_units(config.battery_capacity)
    levels = {}
    for members in clusters:
        for did in members:
            u = rng.random()
            levels[did] = to_units(config.battery_capacity * (1 - config.battery_jitter_fraction * u))
    links = {frozenset(pair) for members in clusters for pair in itertools.combinations(members, 2)}
    return Topology(clusters, positions, {d: min(v, capacity) for d, v in levels.items()}, capacity, links)


# -- engine-ready scenario ---------------------------------------------------

@dataclass
class Scenario:
    config: ScenarioConfig
    topology: Topology
    states: dict[DroneId, proto.DroneState]
    leaders: dict[int, DroneId]
    initial_messages: list[tuple[proto.Envelope, DroneId]]
    energy: EnergyModel
    payloads: proto.PayloadTable
    gbs: Position
    max_ticks: int
    election_timeout: int


def instantiate(config: ScenarioConfig, topology: Topology | None = None) -> Scenario:
    topo = topology or build_topology(config)
    payloads = config.payloads
    crit = config.energy.critical_fraction
    baseline = config.mode is Mode.BASELINE
    states: dict[DroneId, proto.DroneState] = {}
    live_clusters = []
    for members in topo.clusters:
        live = []
        for did in members:
            batt = Battery(topo.capacity, topo.levels[did], 0)
            alive = not is_depleted(batt, crit)
            if alive:
                live.append(did)
            pos = topo.positions[did]
            states[did] = proto.DroneState(
                id=did,
                role=Role.MEMBER if alive else Role.DEPARTED,
                position=pos,
                home=pos,
                battery=batt,
                threshold=config.threshold,
                buffer_capacity=config.buffer_capacity,
                roster=frozenset(),
                initialized=baseline,
                baseline=baseline,
            )
        live_clusters.append(live)
    leaders: dict[int, DroneId] = {}
    messages = []
    if not baseline:
        leaders = proto.initial_leaders([c for c in live_clusters if c])
        for live in live_clusters:
            for did in live:
                states[did] = states[did].evolve(roster=frozenset(live))
        for did in leaders.values():
            states[did] = states[did].evolve(role=Role.LEADER, known_leader=did)
        for did in sorted(d for live in live_clusters for d in live):
            init = proto.Init()
            messages.append((proto.Envelope(init, proto.GBS, did, payloads.size(init), 0), did))
    return Scenario(
        config=config,
        topology=topo,
        states=states,
        leaders=leaders,
        initial_messages=messages,
        energy=config.energy,
        payloads=payloads,
        gbs=GBS_POSITION,
        max_ticks=config.max_ticks,
        election_timeout=config.election_timeout,
    )
