"""Station-relative geometry: look angles, pass finding, point-ahead, dispersion, Doppler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import C_LIGHT, DEFAULT_START, OMEGA_EARTH, R_EARTH
from .errors import ModelInputError
from .orbit import OrbitState, Trajectory, earth_rotation_angle, eclipse, shadow_mask, sun_direction

MAX_CADENCE = 10.0  # s
NIGHT_SUN_ELEVATION = -6.0  # deg, end of civil twilight
_CHUNK = 500_000


@dataclass(frozen=True)
class GroundStation:
    name: str = "MLRO Matera"
    latitude: float = 40.6486  # deg
    longitude: float = 16.7046  # deg
    altitude: float = 536.9  # m above the reference sphere
    min_track_elevation: float = 10.0  # deg
    min_experiment_culmination: float = 30.0  # deg

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ModelInputError("latitude must lie in [-90, 90] deg")
        if not -180.0 <= self.longitude <= 180.0:
            raise ModelInputError("longitude must lie in [-180, 180] deg")
        if not self.min_track_elevation < self.min_experiment_culmination:
            raise ModelInputError("min_track_elevation must be below min_experiment_culmination")

    def frame(self, epoch, start=DEFAULT_START):
        """Station position, velocity and local (east, north, up) axes in ECI."""
        theta = earth_rotation_angle(epoch, start) + math.radians(self.longitude)
        lat = math.radians(self.latitude)
        ct, st = np.cos(theta), np.sin(theta)
        cl, sl = math.cos(lat), math.sin(lat)
        up = np.stack([cl * ct, cl * st, np.full_like(ct, sl)], axis=-1)
        east = np.stack([-st, ct, np.zeros_like(ct)], axis=-1)
        north = np.stack([-sl * ct, -sl * st, np.full_like(ct, cl)], axis=-1)
        pos = (R_EARTH + self.altitude) * up
        vel = np.stack([-OMEGA_EARTH * pos[..., 1], OMEGA_EARTH * pos[..., 0], np.zeros_like(ct)], axis=-1)
        return pos, vel, east, north, up


@dataclass(frozen=True)
class TopoPoint:
    epoch: float  # s
    elevation: float  # deg
    azimuth: float  # deg, from north through east
    slant_range: float  # m
    range_rate: float  # m/s, positive when receding
    transverse_velocity: float  # m/s, perpendicular to the line of sight
    in_eclipse: bool
    sun_elevation: float = float("nan")  # deg, at the station


@dataclass(frozen=True)
class PassEvent:
    rise_epoch: float
    culmination_epoch: float
    set_epoch: float
    max_elevation: float
    eclipse_throughout: bool
    track: tuple = field(repr=False, default=())

    @property
    def duration_above_track_floor(self):
        return self.set_epoch - self.rise_epoch


def _look(epochs, positions, velocities, station, start):
    epochs = np.asarray(epochs, dtype=float)
    s_pos, s_vel, east, north, up = station.frame(epochs, start)
    rho = positions - s_pos
    rng = np.linalg.norm(rho, axis=-1)
    u = rho / rng[..., None]
    el = np.degrees(np.arcsin(np.clip(np.einsum("...i,...i->...", u, up), -1.0, 1.0)))
    az = np.degrees(np.arctan2(np.einsum("...i,...i->...", rho, east), np.einsum("...i,...i->...", rho, north)))
    v_rel = velocities - s_vel
    rr = np.einsum("...i,...i->...", v_rel, u)
    trans = np.linalg.norm(v_rel - rr[..., None] * u, axis=-1)
    sun = sun_direction(epochs, start)
    in_ecl = shadow_mask(positions, sun)
    sun_el = np.degrees(np.arcsin(np.clip(np.einsum("...i,...i->...", sun, up), -1.0, 1.0)))
    return el, np.mod(az, 360.0), rng, rr, trans, in_ecl, sun_el


def topocentric(state, station, sun_dir=None, start=DEFAULT_START):
    """Look angles and line-of-sight kinematics of ``state`` from ``station``.

    ``sun_dir`` overrides the modelled Sun direction for the eclipse flag.
    """
    el, az, rng, rr, trans, in_ecl, sun_el = _look(
        state.epoch, state.position, state.velocity, station, start
    )
    if sun_dir is not None:
        in_ecl = eclipse(state, sun_dir)
    return TopoPoint(
        float(state.epoch), float(el), float(az), float(rng), float(rr), float(trans), bool(in_ecl), float(sun_el)
    )


def slant_range(elevation_deg, altitude, earth_radius=R_EARTH):
    """Closed-form spherical-Earth slant range to a satellite at ``altitude``."""
    s = np.sin(np.radians(elevation_deg))
    return -earth_radius * s + np.sqrt((earth_radius * s) ** 2 + altitude**2 + 2.0 * earth_radius * altitude)


def _elevations(traj, station):
    out = np.empty(len(traj))
    for i in range(0, len(traj), _CHUNK):
        sl = slice(i, i + _CHUNK)
        s_pos, _, _, _, up = station.frame(traj.epochs[sl], traj.start)
        rho = traj.positions[sl] - s_pos
        out[sl] = np.degrees(
            np.arcsin(np.einsum("ij,ij->i", rho, up) / np.linalg.norm(rho, axis=1))
        )
    return out


def _hermite(traj, i, t):
    """Cubic Hermite position/velocity between samples i and i+1."""
    t0, t1 = traj.epochs[i], traj.epochs[i + 1]
    h = t1 - t0
    s = (t - t0) / h
    p0, p1 = traj.positions[i], traj.positions[i + 1]
    v0, v1 = traj.velocities[i] * h, traj.velocities[i + 1] * h
    s2, s3 = s * s, s * s * s
    pos = (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * v0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * v1
    dpos = (6 * s2 - 6 * s) * p0 + (3 * s2 - 4 * s + 1) * v0 + (-6 * s2 + 6 * s) * p1 + (3 * s2 - 2 * s) * v1
    return pos, dpos / h


def _state_at(traj, i, t):
    pos, vel = _hermite(traj, i, t)
    return OrbitState(float(t), pos, vel)


def _elevation_at(traj, i, t, station):
    pos, vel = _hermite(traj, i, t)
    return float(_look(t, pos, vel, station, traj.start)[0])


def _bisect_crossing(traj, i, station, level, tol=0.1):
    """Epoch in [t_i, t_i+1] where elevation crosses ``level``."""
    lo, hi = traj.epochs[i], traj.epochs[i + 1]
    below_lo = _elevation_at(traj, i, lo, station) <= level
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (_elevation_at(traj, i, mid, station) <= level) == below_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _point(traj, i, t, station):
    return topocentric(_state_at(traj, i, t), station, start=traj.start)


def find_passes(states, station, require_eclipse=True, start=None, night_sun_elevation=NIGHT_SUN_ELEVATION):
    """Passes above ``station.min_track_elevation`` that culminate above
    ``station.min_experiment_culmination``.

    Rise and set are bisected to 0.1 s on a cubic Hermite interpolant of the
    samples. With ``require_eclipse`` every track point must be in Earth
    shadow while the Sun is below ``night_sun_elevation`` at the station.
    Passes cut by the ends of the sample window are dropped.
    """
    traj = states if isinstance(states, Trajectory) else Trajectory.from_states(states, start or DEFAULT_START)
    if start is not None and start != traj.start:
        traj = Trajectory(traj.epochs, traj.positions, traj.velocities, start, traj.terminated)
    if len(traj) < 3:
        return []
    if np.max(np.diff(traj.epochs)) > MAX_CADENCE + 1e-9:
        raise ModelInputError(f"state cadence must be <= {MAX_CADENCE:g} s or passes can be missed")
    floor = station.min_track_elevation
    el = _elevations(traj, station)
    above = el > floor
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    rises = edges[~above[edges]]  # sample before the rise
    sets = edges[above[edges]]  # last sample above
    passes = []
    for r in rises:
        later = sets[sets > r]
        if len(later) == 0:
            break
        s = later[0]
        k = r + 1 + int(np.argmax(el[r + 1 : s + 1]))
        if el[k] < station.min_experiment_culmination - 1.0:
            continue
        lo_i, hi_i = max(k - 1, r + 1), min(k + 1, s)
        t_cul = float(traj.epochs[k])
        if hi_i > lo_i:

            def neg_el(t):
                j = min(max(int(np.searchsorted(traj.epochs, t, side="right")) - 1, lo_i), hi_i - 1)
                return -_elevation_at(traj, j, t, station)

            res = minimize_scalar(
                neg_el, bounds=(traj.epochs[lo_i], traj.epochs[hi_i]), method="bounded", options={"xatol": 1e-2}
            )
            t_cul = float(res.x)
        t_rise = _bisect_crossing(traj, r, station, floor)
        t_set = _bisect_crossing(traj, s, station, floor)
        track = [_point(traj, r, t_rise, station)]
        for j in range(r + 1, s + 1):
            if traj.epochs[j - 1] < t_cul < traj.epochs[j] and j - 1 > r:
                track.append(_point(traj, j - 1, t_cul, station))
            track.append(topocentric(traj[j], station, start=traj.start))
        track.append(_point(traj, s, t_set, station))
        max_el = max(p.elevation for p in track)
        t_cul = next(p.epoch for p in track if p.elevation == max_el)
        if max_el < station.min_experiment_culmination:
            continue
        if not t_rise < t_cul < t_set:
            continue
        dark = all(p.in_eclipse and p.sun_elevation < night_sun_elevation for p in track)
        if require_eclipse and not dark:
            continue
        passes.append(PassEvent(t_rise, t_cul, t_set, max_el, dark, tuple(track)))
    return passes


def track_arrays(pass_event):
    """Column arrays (epoch, elevation, slant_range, range_rate, transverse_velocity) of a pass track."""
    tr = pass_event.track
    return {
        "epoch": np.array([p.epoch for p in tr]),
        "elevation": np.array([p.elevation for p in tr]),
        "slant_range": np.array([p.slant_range for p in tr]),
        "range_rate": np.array([p.range_rate for p in tr]),
        "transverse_velocity": np.array([p.transverse_velocity for p in tr]),
    }


def point_ahead(point):
    """Round-trip velocity-aberration point-ahead angle [urad]: 2 v_t / c."""
    return 2.0 * point.transverse_velocity / C_LIGHT * 1e6


def doppler_shift(point, wavelength):
    """Signed wavelength shift [nm] of light at ``wavelength`` [nm]; positive when receding."""
    return wavelength * point.range_rate / C_LIGHT


STANDARD_PRESSURE = 101325.0  # Pa
STANDARD_TEMPERATURE = 288.15  # K


def air_refractivity(wavelength, pressure=STANDARD_PRESSURE, temperature=STANDARD_TEMPERATURE):
    """n - 1 of dry air (Edlen 1966 standard-air dispersion, ideal-gas density scaling)."""
    sigma2 = (1e3 / np.asarray(wavelength, dtype=float)) ** 2  # (1/um)^2
    n_std = 1e-8 * (8342.13 + 2406030.0 / (130.0 - sigma2) + 15997.0 / (38.9 - sigma2))
    return n_std * (pressure / STANDARD_PRESSURE) * (STANDARD_TEMPERATURE / temperature)


def dispersion_offset(
    elevation, wavelength_up, wavelength_down, pressure=STANDARD_PRESSURE, temperature=STANDARD_TEMPERATURE
):
    """Angular separation [urad] of the refracted up- and downlink beams.

    Flat-slab refraction, R = (n - 1) tan(z), evaluated for each wavelength.
    """
    el = np.asarray(elevation, dtype=float)
    if np.any(el < 10.0) or np.any(el > 90.0):
        raise ModelInputError("dispersion model needs elevation in [10, 90] deg")
    for wl in (wavelength_up, wavelength_down):
        if not 350.0 <= wl <= 1600.0:
            raise ModelInputError("wavelengths must lie in [350, 1600] nm")
    dn = abs(air_refractivity(wavelength_up, pressure, temperature) - air_refractivity(wavelength_down, pressure, temperature))
    # tan(z) = cot(elevation); exact zero at the zenith
    out = dn * np.cos(np.radians(el)) / np.sin(np.radians(el)) * 1e6
    out = np.where(el >= 90.0, 0.0, out)
    return float(out) if out.ndim == 0 else out
