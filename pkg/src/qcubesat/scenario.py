"""Strict TOML scenario files.

Every physical quantity carries its unit in the key name. Unknown keys,
wrong types and out-of-range values raise :class:`ScenarioError` naming the
dotted key. Missing keys take the defaults listed in :data:`SCHEMA`, which
is also the source of the generated reference scenario.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import tomli

from .errors import ModelInputError, ScenarioError
from .geometry import GroundStation
from .mission import MissionConfig, PayloadKind
from .optolink import OpticalSourceGeometry, SourceKind
from .orbit import SolarActivity, SpacecraftBody
from .pointing import BeaconTrackerModel, CoarsePointingModel, SteeringModel
from .quantum.entangled import EntangledSourceConfig
from .quantum.records import DetectorConfig
from .quantum.wcp import WcpSourceConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Key:
    default: object
    doc: str
    lo: float | None = None
    hi: float | None = None
    choices: tuple | None = None
    kind: type | None = None  # inferred from the default when None
    lo_open: bool = False

    @property
    def type(self):
        return self.kind or type(self.default)


_ACTIVITIES = tuple(a.value for a in SolarActivity)

SCHEMA = {
    "scenario": {
        "version": Key(SCHEMA_VERSION, "schema version", SCHEMA_VERSION, SCHEMA_VERSION),
        "name": Key("reference", "free-form label"),
    },
    "orbit": {
        "altitude_km": Key(400.0, "deployment altitude above the spherical Earth", 300.0, 500.0),
        "inclination_deg": Key(51.6, "orbit inclination", 0.0, 180.0),
        "start_utc": Key("2018-01-01T00:00:00Z", "scenario epoch (ISO 8601, UTC)"),
        "duration_days": Key(365.0, "propagation span for pass search", 0.01, 3660.0),
        "cadence_s": Key(10.0, "state output cadence", 0.1, 10.0),
        "solar_activity": Key("Moderate", "solar-cycle amplitude scenario", choices=_ACTIVITIES),
        "mass_kg": Key(10.0, "spacecraft mass", 0.1, 1000.0),
        "drag_area_m2": Key(0.0288, "minimum cross-section presented to the flow", 1e-4, 10.0),
        "drag_coefficient": Key(2.2, "dimensionless drag coefficient", 1.5, 3.0),
    },
    "station": {
        "name": Key("MLRO Matera", "label"),
        "latitude_deg": Key(40.6486, "geodetic latitude (spherical Earth)", -90.0, 90.0),
        "longitude_deg": Key(16.7046, "east longitude", -180.0, 180.0),
        "altitude_m": Key(536.9, "height above the reference sphere", -500.0, 9000.0),
        "min_track_elevation_deg": Key(10.0, "tracking floor", 0.0, 89.0),
        "min_experiment_culmination_deg": Key(30.0, "minimum culmination for an experiment pass", 1.0, 90.0),
        "require_eclipse": Key(True, "only passes in Earth shadow during local night"),
    },
    "link": {
        "source_kind": Key("FlatTopAperture", "far-field model", choices=tuple(k.value for k in SourceKind)),
        "source_diameter_m": Key(0.09, "aperture diameter (flat-top) or 1/e^2 waist diameter (Gaussian)", 0.001, 1.0),
        "wavelength_nm": Key(800.0, "downlink wavelength", 350.0, 1600.0),
        "receiver_diameter_m": Key(1.0, "ground telescope aperture", 0.01, 20.0),
        "optics_efficiency": Key(0.5, "combined optics throughput", 0.0, 1.0, lo_open=True),
        "jitter_sigma_urad": Key(3.0, "per-axis pointing jitter for the analytic budget", 0.0, 1000.0),
        "elevations_deg": Key([20.0, 30.0, 45.0, 60.0, 90.0], "elevations tabulated by linkbudget", 10.0, 90.0, kind=list),
    },
    "pointing": {
        "coarse_bias_urad": Key(20.0, "slow attitude drift amplitude", 0.0, 1e6),
        "coarse_sigma_urad": Key(40.0, "coloured coarse noise, 1-sigma per axis", 0.0, 1e6),
        "drift_timescale_s": Key(120.0, "period of the slow drift", 1.0, 1e5),
        "buffeting_amplitude_urad": Key(20.0, "random-walk cap", 0.0, 50.0),
        "buffeting_rate_urad_per_sqrt_s": Key(2.0, "random-walk diffusion", 0.0, 1e3),
        "noise_bandwidth_hz": Key(0.1, "coarse-noise low-pass corner", 1e-3, 10.0),
        "offload_gain_per_s": Key(0.05, "mirror-offset feedback to the ADCS", 0.0, 10.0),
        "pixel_pitch_urad": Key(4.0, "tracker plate scale per pixel", 0.1, 100.0),
        "frame_rate_hz": Key(300.0, "tracker frame rate", 1.0, 1000.0),
        "roi_mode": Key(False, "region-of-interest readout (allows up to 1 kHz)"),
        "psf_sigma_px": Key(1.5, "defocused spot sigma", 0.5, 10.0),
        "signal_photons_per_frame": Key(10000.0, "beacon photo-electrons per frame", 1.0, 1e9),
        "read_noise_e": Key(10.0, "read noise per pixel", 0.0, 1e3),
        "imu_drift_urad": Key(0.5, "IMU propagation floor between frames", 0.0, 100.0),
        "excursion_limit_deg": Key(3.0, "steering mirror half-range", 1.0, 30.0),
        "actuation_bandwidth_hz": Key(200.0, "steering mirror bandwidth", 1.0, 1e5),
        "quantization_urad": Key(0.05, "steering command resolution", 0.0, 10.0),
        "integral_gain_per_s": Key(250.0, "integral gain of the steering loop", 0.0, 1e5),
        "turbulence_tilt_urad": Key(1.0, "uplink tilt 1-sigma per axis", 0.0, 100.0),
        "tilt_rejection": Key(0.5, "fraction of tilt common to up- and downlink", 0.0, 1.0),
        "beacon_wavelength_nm": Key(532.0, "uplink beacon wavelength", 350.0, 1600.0),
        "time_step_s": Key(1e-3, "simulation step", 1e-5, 0.01),
        "window_s": Key(10.0, "simulated span centred on culmination", 0.01, 1000.0),
        "series_decimation": Key(10, "write every n-th residual sample", 1, 10**6),
        "search_days": Key(7.0, "orbit span searched for the first experiment pass", 0.1, 60.0),
    },
    "quantum": {
        "payload": Key("wcp", "qkd source", choices=tuple(k.value for k in PayloadKind)),
        "pulse_rate_hz": Key(100e6, "WCP pulse rate", 1.0, 1e10),
        "mean_photons_signal": Key(0.5, "signal intensity mu", 0.0, 10.0, lo_open=True),
        "mean_photons_decoy": Key(0.1, "decoy intensity nu", 0.0, 10.0),
        "signal_fraction": Key(0.7, "probability of a signal pulse", 0.0, 1.0),
        "decoy_fraction": Key(0.2, "probability of a decoy pulse", 0.0, 1.0),
        "vacuum_fraction": Key(0.1, "probability of a vacuum pulse", 0.0, 1.0),
        "pair_rate_hz": Key(5e6, "entangled pairs generated per second", 1.0, 1e10),
        "heralding_efficiency": Key(0.3, "probability the onboard photon is detected", 0.0, 1.0, lo_open=True),
        "visibility": Key(0.94, "polarisation visibility", 0.7, 1.0, lo_open=True),
        "source_jitter_ps": Key(350.0, "onboard detector timing jitter", 0.0, 1e5),
        "detector_efficiency": Key(0.5, "ground detector efficiency", 0.0, 1.0, lo_open=True),
        "dark_rate_hz": Key(100.0, "ground detector dark counts", 0.0, 1e8),
        "background_rate_hz": Key(500.0, "stray-light counts", 0.0, 1e8),
        "dead_time_ns": Key(50.0, "detector dead time", 0.0, 1e6),
        "detector_jitter_ps": Key(350.0, "ground detector timing jitter", 0.0, 1e5),
        "misalignment": Key(0.01, "bit-error probability of a detected signal photon", 0.0, 0.5),
        "pairing_window_ns": Key(2.0, "slot / coincidence window", 0.01, 1e4),
        "clock_offset_s": Key(0.012345, "inserted ground-minus-space clock offset (entangled)", -1.0, 1.0),
        "search_span_s": Key(1.0, "offset search half-range", 1e-6, 10.0),
        "match_bin_ns": Key(1.0, "fine correlation bin", 0.01, 1e4),
        "entangled_s": Key(1.0, "timestamp span simulated photon by photon", 0.01, 10.0),
        "event_s": Key(1e-3, "span simulated photon by photon for the event CSV", 0.0, 1.0),
        "event_csv_max_rows": Key(10000, "cap on event-level CSV rows (0 disables the file)", 0, 10**8),
    },
    "deorbit": {
        "altitudes_km": Key([300.0, 350.0, 400.0, 450.0, 500.0], "initial altitudes", 300.0, 500.0, kind=list),
        "solar_activities": Key(list(_ACTIVITIES), "solar scenarios", choices=_ACTIVITIES, kind=list),
        "cap_years": Key(100.0, "lifetime cap", 1.0, 1000.0),
    },
    "mission": {
        "months": Key(12, "mission span", 1, 120),
        "weather_clear_probability": Key(0.5, "chance a pass is clear", 0.0, 1.0),
        "pointing_window_s": Key(2.0, "pointing span simulated per pass", 0.01, 100.0),
        "transmission_min_elevation_deg": Key(30.0, "quantum transmission floor", 10.0, 90.0),
        "downlink_rate_bps": Key(100e6, "RF downlink rate", 0.0, 1e10),
        "contact_yield_gb": Key(4.2, "data per station contact (1 GB = 1e9 bytes)", 0.0, 1e3),
        "station_count": Key(3, "RF ground stations", 0, 100),
        "contacts_per_day": Key(2, "contacts per station per day", 1, 24),
        "orbit_average_w": Key(11.0, "orbit-average generated power", 0.0, 1e3),
        "battery_wh": Key(30.0, "battery capacity", 0.1, 1e4),
        "experiment_draw_w": Key(10.0, "payload draw during an experiment", 0.0, 1e3),
        "platform_draw_w": Key(5.0, "platform idle draw", 0.0, 1e3),
        "depth_of_discharge_limit": Key(0.3, "maximum battery depth of discharge", 0.0, 1.0, lo_open=True),
    },
}


def _check(path, spec, value):
    t = spec.type
    if t is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if t is str and isinstance(value, datetime):
        value = value.isoformat()
    if t is list:
        if not isinstance(value, list):
            raise ScenarioError(path, "expected an array")
        return [_check_item(path, spec, v) for v in value]
    if not isinstance(value, t) or (t is int and isinstance(value, bool)):
        raise ScenarioError(path, f"expected {t.__name__}, got {type(value).__name__}")
    return _check_item(path, spec, value)


def _check_item(path, spec, value):
    if spec.choices is not None:
        if value not in spec.choices:
            raise ScenarioError(path, f"must be one of {', '.join(map(str, spec.choices))}")
        return value
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if not isinstance(value, (int, float)):
        raise ScenarioError(path, "expected a number")
    if not math.isfinite(value):
        raise ScenarioError(path, "must be finite")
    lo_ok = spec.lo is None or (value > spec.lo if spec.lo_open else value >= spec.lo)
    if not lo_ok or (spec.hi is not None and value > spec.hi):
        left = "(" if spec.lo_open else "["
        raise ScenarioError(path, f"must lie in {left}{spec.lo:g}, {spec.hi:g}]")
    return value


def _parse_utc(path, text):
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ScenarioError(path, "not an ISO 8601 timestamp") from exc
    return dt.replace(tzinfo=timezone.utc) if dt.tzinfo is None else dt.astimezone(timezone.utc)


@dataclass(frozen=True)
class Scenario:
    values: dict  # section -> key -> validated value
    defaults_applied: tuple = ()
    inputs_hash: str = ""
    source: str = ""

    def __getitem__(self, section):
        return self.values[section]

    @property
    def start(self):
        return _parse_utc("orbit.start_utc", self["orbit"]["start_utc"])

    def station(self):
        s = self["station"]
        return GroundStation(
            s["name"],
            s["latitude_deg"],
            s["longitude_deg"],
            s["altitude_m"],
            s["min_track_elevation_deg"],
            s["min_experiment_culmination_deg"],
        )

    def body(self):
        o = self["orbit"]
        return SpacecraftBody(o["mass_kg"], o["drag_area_m2"], o["drag_coefficient"])

    def source_geometry(self):
        link = self["link"]
        kind = SourceKind(link["source_kind"])
        d = link["source_diameter_m"]
        if kind is SourceKind.FLAT_TOP:
            return OpticalSourceGeometry.wcp(d, link["wavelength_nm"])
        return OpticalSourceGeometry.entangled(d, link["wavelength_nm"])

    def coarse(self):
        p = self["pointing"]
        return CoarsePointingModel(
            p["coarse_bias_urad"],
            p["coarse_sigma_urad"],
            p["drift_timescale_s"],
            p["buffeting_amplitude_urad"],
            p["noise_bandwidth_hz"],
            p["buffeting_rate_urad_per_sqrt_s"],
            p["offload_gain_per_s"],
        )

    def tracker(self):
        p = self["pointing"]
        return BeaconTrackerModel(
            p["pixel_pitch_urad"],
            p["frame_rate_hz"],
            p["psf_sigma_px"],
            p["signal_photons_per_frame"],
            p["read_noise_e"],
            p["roi_mode"],
            p["imu_drift_urad"],
        )

    def steering(self):
        p = self["pointing"]
        return SteeringModel(
            p["excursion_limit_deg"], p["actuation_bandwidth_hz"], p["quantization_urad"], p["integral_gain_per_s"]
        )

    def wcp(self):
        q = self["quantum"]
        return WcpSourceConfig(
            q["pulse_rate_hz"],
            q["mean_photons_signal"],
            q["mean_photons_decoy"],
            q["vacuum_fraction"],
            q["decoy_fraction"],
            q["signal_fraction"],
        )

    def entangled(self):
        q = self["quantum"]
        return EntangledSourceConfig(
            q["pair_rate_hz"], q["heralding_efficiency"], q["visibility"], q["source_jitter_ps"] * 1e-12
        )

    def detector(self):
        q = self["quantum"]
        return DetectorConfig(
            q["detector_efficiency"],
            q["dark_rate_hz"],
            q["dead_time_ns"] * 1e-9,
            q["detector_jitter_ps"] * 1e-12,
            q["background_rate_hz"],
        )

    def mission(self):
        o, m, q, link = self["orbit"], self["mission"], self["quantum"], self["link"]
        return MissionConfig(
            altitude=o["altitude_km"] * 1e3,
            inclination=o["inclination_deg"],
            start=self.start,
            station=self.station(),
            source=self.source_geometry(),
            detector=self.detector(),
            wcp=self.wcp(),
            coarse=self.coarse(),
            tracker=self.tracker(),
            steering=self.steering(),
            body=self.body(),
            solar_activity=SolarActivity(o["solar_activity"]),
            payload=PayloadKind(q["payload"]),
            pair_rate=q["pair_rate_hz"],
            receiver_diameter=link["receiver_diameter_m"],
            optics_efficiency=link["optics_efficiency"],
            misalignment=q["misalignment"],
            turbulence_tilt=self["pointing"]["turbulence_tilt_urad"],
            pointing_window=m["pointing_window_s"],
            transmission_min_elevation=m["transmission_min_elevation_deg"],
            weather_clear_probability=m["weather_clear_probability"],
            cadence=o["cadence_s"],
            downlink_rate=m["downlink_rate_bps"],
            contact_yield_bytes=m["contact_yield_gb"] * 1e9,
            station_count=m["station_count"],
            contacts_per_day=m["contacts_per_day"],
            orbit_average_w=m["orbit_average_w"],
            battery_wh=m["battery_wh"],
            experiment_draw_w=m["experiment_draw_w"],
            platform_draw_w=m["platform_draw_w"],
            depth_of_discharge_limit=m["depth_of_discharge_limit"],
        )


# builders checked at parse time, with the section blamed on failure
_BUILDERS = (
    ("station", Scenario.station),
    ("orbit", Scenario.body),
    ("link", Scenario.source_geometry),
    ("pointing", Scenario.coarse),
    ("pointing", Scenario.tracker),
    ("pointing", Scenario.steering),
    ("quantum", Scenario.wcp),
    ("quantum", Scenario.entangled),
    ("quantum", Scenario.detector),
    ("mission", Scenario.mission),
)


def validate_document(doc, source="", raw=b""):
    if not isinstance(doc, dict):
        raise ScenarioError(None, "document must be a table")
    values, applied = {}, []
    for section in doc:
        if section not in SCHEMA:
            raise ScenarioError(section, "unknown section")
        if not isinstance(doc[section], dict):
            raise ScenarioError(section, "expected a table")
    for section, keys in SCHEMA.items():
        given = doc.get(section, {})
        for k in given:
            if k not in keys:
                raise ScenarioError(f"{section}.{k}", "unknown key")
        out = {}
        for k, spec in keys.items():
            path = f"{section}.{k}"
            if k in given:
                out[k] = _check(path, spec, given[k])
            else:
                out[k] = list(spec.default) if isinstance(spec.default, list) else spec.default
                applied.append(path)
        values[section] = out
    sc = Scenario(values, tuple(applied), hashlib.sha256(raw).hexdigest(), source)
    _parse_utc("orbit.start_utc", values["orbit"]["start_utc"])
    q = values["quantum"]
    total = q["signal_fraction"] + q["decoy_fraction"] + q["vacuum_fraction"]
    if not math.isclose(total, 1.0, abs_tol=1e-9):
        raise ScenarioError("quantum.signal_fraction", "signal, decoy and vacuum fractions must sum to 1")
    if not q["mean_photons_decoy"] < q["mean_photons_signal"]:
        raise ScenarioError("quantum.mean_photons_decoy", "must be below mean_photons_signal")
    st = values["station"]
    if not st["min_track_elevation_deg"] < st["min_experiment_culmination_deg"]:
        raise ScenarioError("station.min_track_elevation_deg", "must be below min_experiment_culmination_deg")
    for section, build in _BUILDERS:
        try:
            build(sc)
        except ModelInputError as exc:
            raise ScenarioError(section, str(exc)) from exc
    return sc


def parse_scenario(path):
    """Read and validate a scenario file."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ScenarioError(None, f"cannot read {p}: {exc.strerror}") from exc
    try:
        doc = tomli.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomli.TOMLDecodeError) as exc:
        raise ScenarioError(None, f"malformed TOML: {exc}") from exc
    return validate_document(doc, str(p), raw)


def default_scenario():
    return validate_document({}, "<defaults>", b"")


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reference_scenario():
    """TOML text listing every key with its default and meaning.

    Written by hand because TOML writers drop comments.
    """
    lines = ["# qcubesat reference scenario: every key at its default value.", ""]
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for k, spec in keys.items():
            lines.append(f"{k} = {_toml_value(spec.default)}  # {spec.doc}")
        lines.append("")
    return "\n".join(lines)
