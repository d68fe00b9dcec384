"""Scenario parsing, unit conversion, validation and the physics hash."""

import math
from dataclasses import replace

import numpy as np
import pytest

from risbandit.geometry import Position3D
from risbandit.scenario import (
    RadioConstants,
    builtin_scenario_path,
    db_to_natlog,
    dbm_to_watt,
    load_scenario,
    parse_phase_mode,
    sample_device_positions,
    scenario_physics_hash,
    validate_scenario,
)


def test_dbm_to_watt():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(20.0) == pytest.approx(0.1)
    assert dbm_to_watt(-95.0) == pytest.approx(10.0 ** (-12.5))


def test_db_to_natlog():
    assert db_to_natlog(8.0) == pytest.approx(8.0 * math.log(10.0) / 10.0)
    assert db_to_natlog(0.0) == 0.0


def test_total_denominator_split_reconstructs_total():
    total = dbm_to_watt(-95.0)
    radio = RadioConstants.with_total_denominator(
        total, tx_power=0.1, carrier_freq=5.9e9, bandwidth=40e6)
    assert radio.noise_power == pytest.approx(total / 2.0)
    assert radio.interference_plus_noise == pytest.approx(total, rel=1e-12)


def test_load_fig3_fields(fig3_scenario):
    s = fig3_scenario
    assert s.n_devices == 3 and s.n_ris == 3 and s.n_sf == 6
    assert s.bs == Position3D(100.0, 0.0, 20.0)
    assert s.ues == (Position3D(150.0, 150.0, 1.5),)
    assert s.ue_centroid == Position3D(150.0, 150.0, 1.5)
    assert all(d.z == 1.5 for d in s.devices)
    assert s.sf_table.sfs == (7, 8, 9, 10, 11, 12)
    assert s.sf_table.thresholds == (4500.0, 4000.0, 3500.0, 3000.0, 2500.0, 2000.0)
    assert s.radio.tx_power == pytest.approx(0.1)
    assert s.radio.bandwidth == 40e6
    assert s.radio.carrier_freq == 5.9e9
    assert s.radio.wavelength == pytest.approx(299_792_458.0 / 5.9e9)
    assert s.radio.rician_factor == 4.0
    assert s.ris_active_prob == (0.2, 0.2, 0.2)
    assert s.phase_shift_mode == "optimal"
    assert s.algo.epochs == 10 and s.algo.nu1 == 1000 and s.algo.nu3 == 100
    assert all(g.rows == 101 and g.cols == 101 for g in s.riss)
    assert s.radio.interference_plus_noise == pytest.approx(dbm_to_watt(-95.0), rel=1e-12)


def test_rates_follow_from_bandwidth(fig3_scenario):
    t = fig3_scenario.sf_table
    for s, r in zip(t.sfs, t.rates):
        assert r == 40e6 * s / 2.0 ** s * 0.5
    assert all(a > b for a, b in zip(t.rates, t.rates[1:]))


def test_load_cluster_scenario(cluster_scenario):
    s = cluster_scenario
    assert s.n_devices == 11 and s.n_ris == 3
    assert validate_scenario(s) == []
    # all pairwise spacings respect the declared minimum
    for i in range(11):
        for j in range(i + 1, 11):
            assert s.devices[i].distance_to(s.devices[j]) >= s.min_device_distance


def test_validate_catches_bad_occupancy(fig3_scenario):
    bad = validate_scenario(replace(fig3_scenario, ris_active_prob=(0.2, 1.5, 0.2)))
    assert any("ris_active_prob[1]" in b for b in bad)


def test_validate_catches_nondescending_thresholds(fig3_scenario):
    t = fig3_scenario.sf_table
    bad = validate_scenario(replace(
        fig3_scenario, sf_table=replace(t, thresholds=(1.0,) * len(t))))
    assert any("thresholds" in b for b in bad)


def test_validate_catches_close_devices(fig3_scenario):
    devs = (Position3D(150.0, 150.0, 1.5), Position3D(151.0, 150.0, 1.5))
    bad = validate_scenario(fig3_scenario.with_devices(devs))
    assert any("below the" in b for b in bad)


def test_validate_catches_negative_height(fig3_scenario):
    bad = validate_scenario(replace(fig3_scenario, bs=Position3D(0, 0, -3.0)))
    assert any(b.startswith("bs:") for b in bad)


def test_validate_catches_tampered_element_grid(fig3_scenario):
    g = replace(fig3_scenario.riss[0])
    g.__dict__["element_positions"] = np.zeros((g.rows, g.cols, 3))
    bad = validate_scenario(replace(fig3_scenario, riss=(g,) + fig3_scenario.riss[1:]))
    assert any("does not match" in b for b in bad)


def test_validate_catches_bad_phase_mode(fig3_scenario):
    bad = validate_scenario(replace(fig3_scenario, phase_shift_mode="sideways"))
    assert any("phase_shift_mode" in b for b in bad)


def test_validate_catches_bad_reflection_amplitude(fig3_scenario):
    r = replace(fig3_scenario.radio, reflection_amplitude=0.0)
    bad = validate_scenario(replace(fig3_scenario, radio=r))
    assert any("reflection_amplitude" in b for b in bad)


def test_parse_phase_mode():
    assert parse_phase_mode("optimal") == ("optimal", None)
    assert parse_phase_mode("constant:170") == ("constant", 170)
    with pytest.raises(ValueError):
        parse_phase_mode("constant")
    with pytest.raises(ValueError):
        parse_phase_mode(42)


def test_physics_hash_stable_and_ignores_learning_knobs(fig3_scenario):
    again = load_scenario(builtin_scenario_path("fig3"))
    h0 = scenario_physics_hash(fig3_scenario)
    assert scenario_physics_hash(again) == h0
    tweaked = replace(fig3_scenario, algo=replace(fig3_scenario.algo, nu1=77))
    assert scenario_physics_hash(tweaked) == h0


def test_physics_hash_sensitive_to_radio_and_phase(fig3_scenario):
    h0 = scenario_physics_hash(fig3_scenario)
    r = replace(fig3_scenario.radio, rician_factor=10.0)
    assert scenario_physics_hash(replace(fig3_scenario, radio=r)) != h0
    assert scenario_physics_hash(replace(fig3_scenario, phase_shift_mode="constant:170")) != h0
    moved = fig3_scenario.with_devices(
        fig3_scenario.devices[:-1] + (Position3D(151.0, 162.0, 1.5),))
    assert scenario_physics_hash(moved) != h0


def test_sample_device_positions(fig3_scenario):
    sc = replace(fig3_scenario, devices=(), random_devices=6)
    assert sc.n_devices == 6
    rng = np.random.default_rng(3)
    pts = sample_device_positions(sc, rng)
    assert len(pts) == 6
    cx, cy = sc.device_disc_center
    radius = sc.device_disc_diameter / 2.0
    for p in pts:
        assert math.hypot(p.x - cx, p.y - cy) <= radius + 1e-9
        assert p.z == sc.device_height
    for i in range(6):
        for j in range(i + 1, 6):
            assert pts[i].distance_to(pts[j]) >= sc.min_device_distance
    again = sample_device_positions(sc, np.random.default_rng(3))
    assert pts == again


def test_sample_device_positions_gives_up_when_overpacked(fig3_scenario):
    sc = replace(fig3_scenario, devices=(), random_devices=4,
                 device_disc_diameter=6.0, min_device_distance=5.0)
    with pytest.raises(RuntimeError):
        sample_device_positions(sc, np.random.default_rng(0))


def test_loader_requires_devices(tmp_path):
    src = open(builtin_scenario_path("fig3")).read()
    crippled = src.replace(
        'positions = [[139.0, 139.0], [142.0, 150.0], [150.0, 162.0]]', "")
    p = tmp_path / "no_devices.scenario"
    p.write_text(crippled)
    with pytest.raises(ValueError, match="devices"):
        load_scenario(p)


def test_loader_rejects_invalid_scenario(tmp_path):
    src = open(builtin_scenario_path("fig3")).read()
    p = tmp_path / "bad_pa.scenario"
    p.write_text(src.replace("ris_active_prob = 0.2", "ris_active_prob = 1.7"))
    with pytest.raises(ValueError, match="ris_active_prob"):
        load_scenario(p)


def test_with_devices_clears_random_mode(fig3_scenario):
    sc = replace(fig3_scenario, devices=(), random_devices=2)
    fixed = sc.with_devices((Position3D(140, 150, 1.5), Position3D(150, 160, 1.5)))
    assert fixed.random_devices == 0
    assert fixed.n_devices == 2
