import math

import numpy as np
import pytest

from qcubesat.errors import ModelInputError
from qcubesat.geometry import GroundStation, TopoPoint, find_passes, slant_range
from qcubesat.mission import (
    MissionConfig,
    PayloadKind,
    backlog_series,
    contact_capacity,
    data_budget,
    energy_budget,
    run_mission,
    simulate_pass,
    transmission_segments,
)
from qcubesat.optolink import OpticalSourceGeometry, link_budget
from qcubesat.orbit import circular_state, propagate
from qcubesat.quantum.records import DetectorConfig
from qcubesat.quantum.wcp import WcpSourceConfig, simulate_wcp_aggregate


def test_config_defaults():
    c = MissionConfig()
    assert (c.downlink_rate, c.contact_yield_bytes, c.station_count) == (100e6, 4.2e9, 3)
    assert (c.orbit_average_w, c.battery_wh, c.experiment_draw_w, c.platform_draw_w) == (11.0, 30.0, 10.0, 5.0)


@pytest.mark.parametrize(
    "kw",
    [
        {"altitude": 900e3},
        {"altitude": 250e3},
        {"depth_of_discharge_limit": 1.0},
        {"weather_clear_probability": 1.5},
        {"contacts_per_day": 0},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ModelInputError):
        MissionConfig(**kw)


# --- budgets --------------------------------------------------------------------


def test_energy_examples():
    c = MissionConfig()
    assert energy_budget(c, 360.0).depth_of_discharge == pytest.approx(0.05)
    assert not energy_budget(c, 360.0).exceeds_limit
    assert energy_budget(c, 0.0).depth_of_discharge == 0.0
    two_hours = energy_budget(c, 7200.0)
    assert two_hours.depth_of_discharge == pytest.approx(1.0)
    assert two_hours.exceeds_limit
    with pytest.raises(ModelInputError):
        energy_budget(c, -1.0)


def test_data_budget_examples():
    assert data_budget(PayloadKind.WCP, 400.0) == pytest.approx(1.6e11)
    assert data_budget("entangled", 400.0) == pytest.approx(4e10)
    assert data_budget(PayloadKind.WCP, 0.0) == 0.0
    with pytest.raises(ValueError):
        data_budget("laser", 1.0)


def test_backlog_conservation():
    rng = np.random.default_rng(0)
    gen = rng.exponential(5e9, 200) * (rng.random(200) < 0.3)
    cap = 12.6e9
    b = backlog_series(gen, cap)
    assert b[0] == 0.0 and np.all(b >= 0)
    for k in range(gen.size):
        assert b[k + 1] == max(0.0, b[k] + gen[k] - cap)


def test_backlog_zero_capacity_monotone():
    b = backlog_series(np.abs(np.random.default_rng(1).normal(1e9, 1e9, 50)), 0.0)
    assert np.all(np.diff(b) >= 0)


def test_twenty_gigabyte_pass_cleared_within_a_day():
    c = MissionConfig()
    steps_per_day = c.contacts_per_day
    gen = np.zeros(10)
    gen[[1, 5]] = 20e9  # experiments two days apart
    b = backlog_series(gen, contact_capacity(c))
    assert contact_capacity(c) == pytest.approx(12.6e9)
    for k in (1, 5):
        assert b[k + 1] > 0
        assert b[k + 1 + steps_per_day - 1] == 0.0


# --- pass-level physics -----------------------------------------------------------


def _mean_pass_minutes(alt):
    traj = propagate(circular_state(alt, 51.6), duration=10 * 86400.0, step=10.0, drag_enabled=False)
    passes = find_passes(traj, GroundStation(), require_eclipse=False)
    return np.mean([p.duration_above_track_floor for p in passes]) / 60.0


def test_lower_orbit_has_shorter_passes():
    assert _mean_pass_minutes(300e3) < _mean_pass_minutes(400e3)


def test_detection_rate_rises_as_altitude_drops():
    src = OpticalSourceGeometry.wcp()
    rates = []
    for alt in (500e3, 400e3, 300e3):
        p = TopoPoint(0.0, 60.0, 0.0, float(slant_range(60.0, alt)), 0.0, 0.0, True)
        db = link_budget(src, p).total
        t = simulate_wcp_aggregate(WcpSourceConfig(), 1.0, db, DetectorConfig(), seed=3)
        rates.append(t.clicks.sum())
    assert rates[0] < rates[1] < rates[2]


def test_transmission_segments_cover_high_track(experiment_pass):
    seg = transmission_segments(experiment_pass, 30.0)
    assert seg and all(p.elevation >= 30.0 for p, _ in seg)
    total = sum(d for _, d in seg)
    assert 0 < total < experiment_pass.duration_above_track_floor


def test_simulate_pass_wcp(experiment_pass):
    out = simulate_pass(MissionConfig(), experiment_pass, np.random.default_rng(4))
    assert out.locked and out.tally is not None
    assert out.pointing_rms <= 3.0
    assert out.pointing_loss_db < 0
    assert out.detections == out.tally.clicks.sum()
    assert out.mean_detection_rate > 1e3


def test_simulate_pass_entangled(experiment_pass):
    cfg = MissionConfig(payload=PayloadKind.ENTANGLED, source=OpticalSourceGeometry.entangled())
    out = simulate_pass(cfg, experiment_pass, np.random.default_rng(5))
    assert out.locked and out.tally is None
    # pair rate x channel x detector efficiency, order of 1e3 to 1e4 per second
    assert 1e3 <= out.mean_detection_rate <= 3e4


# --- full runs ------------------------------------------------------------------


@pytest.fixture(scope="module")
def one_month():
    return run_mission(MissionConfig(), 1, seed=7)


def test_mission_report_invariants(one_month):
    r = one_month
    assert len(r.months) == 1
    assert r.opportunities == len(r.passes)
    assert np.all(r.backlog_bytes >= 0)
    for p in r.passes:
        if p.scheduled:
            assert p.clear and p.depth_of_discharge <= MissionConfig().depth_of_discharge_limit
            assert p.key is not None and p.key.sifted_bits <= p.key.sent_pulses
        else:
            assert p.data_bytes == 0.0
    assert r.end_of_experiments_days is None
    assert 395 <= r.altitude_km[0] <= 400.5


def test_mission_deterministic(one_month):
    again = run_mission(MissionConfig(), 1, seed=7)
    assert again.passes == one_month.passes
    assert np.array_equal(again.backlog_bytes, one_month.backlog_bytes)


def test_zero_downlink_backlog_monotone():
    r = run_mission(MissionConfig(station_count=0, weather_clear_probability=1.0), 1, seed=8)
    assert r.experiments
    assert np.all(np.diff(r.backlog_bytes) >= 0)
    assert r.backlog_bytes[-1] == pytest.approx(sum(p.data_bytes for p in r.passes))


def test_battery_limit_blocks_experiments():
    r = run_mission(MissionConfig(battery_wh=1.0, weather_clear_probability=1.0), 1, seed=9)
    assert r.opportunities > 0
    assert not r.experiments


def test_months_validated():
    with pytest.raises(ModelInputError):
        run_mission(MissionConfig(), 0, seed=0)


def test_reentry_ends_experiments():
    r = run_mission(MissionConfig(altitude=300e3, solar_activity=MissionConfig().solar_activity), 4, seed=1)
    assert r.end_of_experiments_days is not None
    assert r.end_of_experiments_days < 120
    assert all(p.rise_epoch / 86400 < r.end_of_experiments_days for p in r.passes)
    assert not math.isnan(r.months[0].mean_altitude_km)
