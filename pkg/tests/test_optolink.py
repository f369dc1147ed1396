import math

import numpy as np
import pytest

from oracles import gaussian_capture, jitter_loss_monte_carlo
from qcubesat.errors import ModelInputError
from qcubesat.geometry import TopoPoint, slant_range
from qcubesat.optolink import (
    OpticalSourceGeometry,
    SourceKind,
    atmospheric_transmittance,
    beam_half_angle_1e2,
    capture_fraction,
    divergence_half_angle,
    ground_spot,
    link_budget,
    pointing_loss,
)
from qcubesat.quantum.entangled import EntangledSourceConfig, emit_entangled
from qcubesat.quantum.records import DetectorConfig, detect

WCP = OpticalSourceGeometry.wcp()
ENT = OpticalSourceGeometry.entangled()


def _at(el, alt=400e3):
    return TopoPoint(0.0, el, 0.0, float(slant_range(el, alt)), 0.0, 0.0, True)


def test_geometry_validation():
    with pytest.raises(ModelInputError):
        OpticalSourceGeometry(SourceKind.FLAT_TOP, 0.0)
    with pytest.raises(ModelInputError):
        OpticalSourceGeometry.entangled(waist_diameter=0.1)  # wider than the 90 mm telescope


def test_divergence_examples():
    assert divergence_half_angle(WCP) == pytest.approx(0.514 * 800e-9 / 0.09 * 1e6, rel=1e-12)
    assert divergence_half_angle(WCP) == pytest.approx(4.0, rel=0.2)
    assert divergence_half_angle(ENT) == pytest.approx(7.8, rel=0.02)
    for src in (WCP, ENT):
        twice = OpticalSourceGeometry(src.kind, src.size, 2 * src.wavelength, src.telescope_aperture)
        assert divergence_half_angle(twice) == pytest.approx(2 * divergence_half_angle(src))


def test_ground_spot_examples():
    assert ground_spot(WCP, 400e3) == pytest.approx(3.2, rel=0.15)
    assert 12.0 <= ground_spot(ENT, slant_range(20.0, 400e3)) <= 19.0
    assert ground_spot(ENT, 0.0) == 0.0
    with pytest.raises(ModelInputError):
        ground_spot(WCP, -1.0)


def test_transmittance_calibration():
    assert atmospheric_transmittance(70.0) == pytest.approx(0.70, abs=1e-12)
    assert atmospheric_transmittance(90.0) == pytest.approx(0.70 ** math.cos(math.radians(20)), abs=1e-12)
    assert atmospheric_transmittance(90.0) == pytest.approx(0.715, abs=1e-3)
    el = np.linspace(10, 90, 200)
    assert np.all(np.diff(atmospheric_transmittance(el)) > 0)
    # shorter wavelengths see a thicker atmosphere
    assert atmospheric_transmittance(45.0, 532.0) < atmospheric_transmittance(45.0, 800.0)
    with pytest.raises(ModelInputError):
        atmospheric_transmittance(5.0)


@pytest.mark.parametrize("rng_m", [3e5, 6e5, 1.2e6])
@pytest.mark.parametrize("src", [WCP, ENT], ids=["wcp", "entangled"])
def test_capture_matches_quadrature(src, rng_m):
    w = beam_half_angle_1e2(src) * 1e-6 * rng_m
    assert capture_fraction(src, rng_m, 1.0) == pytest.approx(gaussian_capture(0.5, w), rel=1e-8)


def test_capture_small_receiver_area_ratio():
    # spot much larger than receiver: capture is receiver area over the Gaussian's effective area pi w^2 / 2
    w = beam_half_angle_1e2(ENT) * 1e-6 * 1e6
    a = 0.1
    assert capture_fraction(ENT, 1e6, 2 * a) == pytest.approx(a * a / (w * w / 2), rel=0.05)


def test_pointing_loss_examples():
    assert pointing_loss(0.0, 7.8) == 0.0
    loss = pointing_loss(3.0, beam_half_angle_1e2(ENT))
    assert -3.0 <= loss <= -1.0
    s = np.linspace(0, 10, 50)
    vals = [pointing_loss(x, 7.8) for x in s]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(ModelInputError):
        pointing_loss(-1.0, 7.8)


@pytest.mark.parametrize("ratio", [0.0, 0.1, 0.5, 1.0, 2.0])
def test_pointing_loss_matches_monte_carlo(ratio):
    w = 7.83
    assert pointing_loss(ratio * w, w) == pytest.approx(jitter_loss_monte_carlo(ratio * w, w), abs=0.1)


def test_link_budget_additivity_and_signs():
    for src in (WCP, ENT):
        for el in (20.0, 45.0, 90.0):
            lb = link_budget(src, _at(el))
            parts = (lb.diffraction_geometric_loss, lb.pointing_loss, lb.atmospheric_loss, lb.optics_efficiency_loss)
            assert lb.total == pytest.approx(sum(parts), abs=1e-9)
            assert all(p <= 0 for p in parts)


def test_lossless_geometry_leaves_atmosphere_only():
    p = _at(90.0)
    lb = link_budget(ENT, p, receiver_diameter=10.0, jitter_sigma=0.0, optics_efficiency=1.0)
    assert lb.diffraction_geometric_loss == 0.0
    assert lb.total == pytest.approx(10 * math.log10(atmospheric_transmittance(90.0)), abs=1e-12)


def test_link_budget_validation():
    with pytest.raises(ModelInputError):
        link_budget(WCP, _at(45.0), receiver_diameter=0.0)
    with pytest.raises(ModelInputError):
        link_budget(WCP, _at(45.0), optics_efficiency=1.5)


def test_total_monotone_in_elevation():
    el = np.linspace(10, 90, 81)
    totals = [link_budget(WCP, _at(e)).total for e in el]
    assert np.all(np.diff(totals) >= 0)


def test_entangled_rate_at_30_deg_in_station_range():
    lb = link_budget(ENT, _at(30.0))
    local, remote = emit_entangled(EntangledSourceConfig(), 0.2, seed=1)
    rec = detect(remote, lb.transmission, DetectorConfig(), np.random.default_rng(2))
    rate = rec.timestamps.size / 0.2
    assert 1e3 <= rate <= 1e4
