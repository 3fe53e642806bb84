import itertools
import math
from dataclasses import replace

import pytest

from fleetems.energy import EnergyModel
from fleetems.model import DroneId, Role, distance, to_units
from fleetems.scenario import (
    ConfigError,
    Mode,
    ScenarioConfig,
    build_topology,
    cluster_center,
    config_to_text,
    instantiate,
    load_config,
    parse_assignments,
    parse_config_text,
)


def links_in(topo, cluster):
    return [l for l in topo.links if all(d.cluster == cluster for d in l)]


def test_link_counts():
    topo = build_topology(ScenarioConfig(clusters=2, drones_per_cluster=3))
    assert len(topo.positions) == 6
    assert len(links_in(topo, 0)) == len(links_in(topo, 1)) == 3
    assert len(topo.links) == 6  # nothing crosses clusters
    assert build_topology(ScenarioConfig(clusters=1, drones_per_cluster=1)).links == set()
    assert len(build_topology(ScenarioConfig(clusters=1, drones_per_cluster=4)).links) == 6


def test_links_are_complete_within_clusters():
    topo = build_topology(ScenarioConfig(clusters=3, drones_per_cluster=5))
    want = {frozenset(p) for members in topo.clusters for p in itertools.combinations(members, 2)}
    assert topo.links == want


def test_positions_and_levels_within_bounds():
    cfg = ScenarioConfig(clusters=3, drones_per_cluster=8, cluster_radius=25.0,
                         battery_jitter_fraction=0.3, seed=5)
    topo = build_topology(cfg)
    for did, pos in topo.positions.items():
        c = cluster_center(cfg, did.cluster)
        assert pos.z == cfg.altitude
        assert distance(pos, c) <= cfg.cluster_radius + 1e-9
    for level in topo.levels.values():
        assert to_units(cfg.battery_capacity * 0.7) <= level <= to_units(cfg.battery_capacity)


def test_cluster_centres_on_a_line():
    cfg = ScenarioConfig(cluster_spacing=150.0, altitude=80.0)
    assert cluster_center(cfg, 0).x == 150.0 and cluster_center(cfg, 2).x == 450.0
    assert cluster_center(cfg, 1).z == 80.0


def test_leader_mode_wiring():
    sc = instantiate(ScenarioConfig(clusters=1, drones_per_cluster=3))
    assert sc.leaders == {0: DroneId(0, 0)}
    assert sc.states[DroneId(0, 0)].role is Role.LEADER
    assert [dst for _, dst in sc.initial_messages] == [DroneId(0, i) for i in range(3)]
    assert all(s.roster == frozenset(sc.topology.clusters[0]) for s in sc.states.values())


def test_baseline_mode_wiring():
    from fleetems.engine import run

    cfg = ScenarioConfig(clusters=1, drones_per_cluster=3, mode=Mode.BASELINE, max_ticks=1)
    sc = instantiate(cfg)
    assert sc.leaders == {} and sc.initial_messages == []
    assert all(s.role is Role.MEMBER for s in sc.states.values())
    trace = run(sc)
    assert trace.sent_by_kind == {"Data": 3}


def test_modes_share_initial_conditions():
    cfg = ScenarioConfig(clusters=2, drones_per_cluster=5, seed=99)
    a = build_topology(cfg)
    b = build_topology(replace(cfg, mode=Mode.BASELINE))
    assert a.positions == b.positions and a.levels == b.levels


def test_depleted_at_start_is_departed():
    cfg = ScenarioConfig(clusters=1, drones_per_cluster=3)
    topo = build_topology(cfg)
    topo.levels[DroneId(0, 0)] = 0
    sc = instantiate(cfg, topo)
    assert sc.states[DroneId(0, 0)].role is Role.DEPARTED
    assert sc.leaders == {0: DroneId(0, 1)}


@pytest.mark.parametrize("field, value", [
    ("clusters", 0), ("drones_per_cluster", 0), ("max_ticks", 0), ("cluster_radius", -1.0),
    ("threshold", 0), ("threshold", 100), ("battery_jitter_fraction", 1.0), ("election_timeout", 2),
])
def test_invalid_config(field, value):
    with pytest.raises(ConfigError) as err:
        ScenarioConfig(**{field: value})
    assert err.value.key == field


def test_config_text_parsing():
    text = """
    # a comment
    clusters = 3          # trailing comment
    mode = baseline
    threshold = 45
    energy.idle_per_tick = 0.5
    payload_overrides.Data = 80
    """
    cfg = parse_config_text(text)
    assert cfg.clusters == 3 and cfg.mode is Mode.BASELINE and cfg.threshold == 45.0
    assert cfg.energy == replace(EnergyModel(), idle_per_tick=0.5)
    assert cfg.payloads.Data == 80


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as err:
        parse_config_text("fo = 1")
    assert err.value.key == "fo" and "fo" in str(err.value)
    with pytest.raises(ConfigError):
        parse_config_text("energy.nope = 1")


@pytest.mark.parametrize("text, key", [
    ("clusters = many", "clusters"),
    ("threshold = nan", "threshold"),
    ("mode = sideways", "mode"),
])
def test_bad_values_are_named(text, key):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert err.value.key == key


def test_missing_equals_sign():
    with pytest.raises(ConfigError):
        parse_config_text("clusters 3")


def test_last_write_wins():
    cfg = parse_assignments([("threshold", "30"), ("threshold", "50")])
    assert cfg.threshold == 50


def test_config_round_trip(tmp_path):
    cfg = ScenarioConfig(mode=Mode.BASELINE, threshold=33.3, seed=2**63 + 5,
                         payload_overrides={"Data": 80}, energy=EnergyModel(e_amp=3e-7))
    path = tmp_path / "c.conf"
    path.write_text(config_to_text(cfg))
    assert load_config(path) == cfg
    assert not math.isnan(load_config(path).threshold)
