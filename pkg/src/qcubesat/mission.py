"""Mission-level scheduling: passes per month, per-pass key yield, data and energy budgets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .constants import DEFAULT_START, SECONDS_PER_DAY, SECONDS_PER_YEAR
from .errors import ModelInputError
from .geometry import GroundStation, find_passes
from .optolink import OpticalSourceGeometry, link_budget
from .orbit import SolarActivity, SolarActivityScenario, SpacecraftBody, circular_state, propagate
from .pointing import (
    BeaconTrackerModel,
    CoarsePointingModel,
    SteeringModel,
    jitter_summary_to_loss,
    simulate_pointing_run,
)
from .quantum.decoy import KeyReport, key_report
from .quantum.records import DetectorConfig
from .quantum.wcp import WcpSourceConfig, WcpTally, simulate_wcp_aggregate

SECONDS_PER_MONTH = SECONDS_PER_YEAR / 12.0
EXPERIMENTS_END_ALTITUDE = 300e3
TIMESTAMP_BITS_PER_EVENT = 20
WCP_BITS_PER_PULSE = 4  # basis, bit, two intensity-class bits


class PayloadKind(enum.Enum):
    WCP = "wcp"
    ENTANGLED = "entangled"


@dataclass(frozen=True)
class MissionConfig:
    altitude: float = 400e3  # m
    inclination: float = 51.6  # deg
    start: datetime = DEFAULT_START
    station: GroundStation = field(default_factory=GroundStation)
    source: OpticalSourceGeometry = field(default_factory=OpticalSourceGeometry.wcp)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    wcp: WcpSourceConfig = field(default_factory=WcpSourceConfig)
    coarse: CoarsePointingModel = field(default_factory=CoarsePointingModel)
    tracker: BeaconTrackerModel = field(default_factory=BeaconTrackerModel)
    steering: SteeringModel = field(default_factory=SteeringModel)
    body: SpacecraftBody = field(default_factory=SpacecraftBody)
    solar_activity: SolarActivity = SolarActivity.MODERATE
    payload: PayloadKind = PayloadKind.WCP
    pair_rate: float = 5e6  # pairs/s, entangled payload
    receiver_diameter: float = 1.0  # m
    optics_efficiency: float = 0.5
    misalignment: float = 0.01  # bit-error probability of a detected signal photon
    turbulence_tilt: float = 1.0  # urad
    pointing_window: float = 2.0  # s simulated around culmination
    transmission_min_elevation: float = 30.0  # deg
    weather_clear_probability: float = 0.5
    cadence: float = 10.0  # s
    # comms
    downlink_rate: float = 100e6  # bit/s
    contact_yield_bytes: float = 4.2e9
    station_count: int = 3
    contacts_per_day: int = 2
    # power
    orbit_average_w: float = 11.0
    battery_wh: float = 30.0
    experiment_draw_w: float = 10.0
    platform_draw_w: float = 5.0
    depth_of_discharge_limit: float = 0.3

    def __post_init__(self):
        if not 300e3 <= self.altitude <= 500e3:
            raise ModelInputError("deployment altitude must lie in [300, 500] km")
        if not 0.0 < self.depth_of_discharge_limit < 1.0:
            raise ModelInputError("depth-of-discharge limit must lie in (0, 1)")
        if not 0.0 <= self.weather_clear_probability <= 1.0:
            raise ModelInputError("clear-weather probability must lie in [0, 1]")
        if self.station_count < 0 or self.contacts_per_day < 1:
            raise ModelInputError("need station_count >= 0 and contacts_per_day >= 1")
        if self.contact_yield_bytes < 0 or self.battery_wh <= 0:
            raise ModelInputError("contact yield must be >= 0 and battery capacity > 0")


@dataclass(frozen=True)
class EnergyBudget:
    depth_of_discharge: float
    exceeds_limit: bool


def energy_budget(config, experiment_duration):
    """Battery depth of discharge for one experiment run on battery alone."""
    if experiment_duration < 0:
        raise ModelInputError("duration must be non-negative")
    wh = (config.experiment_draw_w + config.platform_draw_w) * experiment_duration / 3600.0
    dod = wh / config.battery_wh
    return EnergyBudget(dod, dod > config.depth_of_discharge_limit)


def data_budget(kind, duration, pulse_rate=100e6, pair_rate=5e6):
    """Onboard bits produced by a transmission of ``duration`` seconds."""
    if duration < 0:
        raise ModelInputError("duration must be non-negative")
    kind = PayloadKind(kind)
    if kind is PayloadKind.WCP:
        return pulse_rate * duration * WCP_BITS_PER_PULSE
    return pair_rate * duration * TIMESTAMP_BITS_PER_EVENT


def backlog_series(generated, capacity_per_step):
    """backlog[k+1] = max(0, backlog[k] + generated[k] - capacity[k]), from an empty store."""
    gen = np.asarray(generated, dtype=float)
    cap = np.broadcast_to(np.asarray(capacity_per_step, dtype=float), gen.shape)
    out = np.empty(gen.size + 1)
    out[0] = 0.0
    for k in range(gen.size):
        out[k + 1] = max(0.0, out[k] + gen[k] - cap[k])
    return out


def contact_capacity(config):
    """Bytes downlinked per contact round (every station once)."""
    return config.station_count * config.contact_yield_bytes


@dataclass(frozen=True)
class MonthStats:
    month: int
    passes: int
    mean_duration_min: float
    mean_altitude_km: float


@dataclass(frozen=True)
class PassSummary:
    rise_epoch: float  # s since start
    max_elevation: float
    duration: float  # s above the track floor
    transmission_time: float  # s above the transmission elevation
    clear: bool
    scheduled: bool
    depth_of_discharge: float
    pointing_rms: float  # urad
    pointing_loss_db: float
    mean_detection_rate: float  # 1/s
    data_bytes: float
    key: KeyReport | None


@dataclass(frozen=True)
class MissionReport:
    months: list
    passes: list
    altitude_days: np.ndarray = field(repr=False)
    altitude_km: np.ndarray = field(repr=False)
    backlog_days: np.ndarray = field(repr=False)
    backlog_bytes: np.ndarray = field(repr=False)
    end_of_experiments_days: float | None

    @property
    def opportunities(self):
        return sum(m.passes for m in self.months)

    @property
    def experiments(self):
        return [p for p in self.passes if p.scheduled]


def transmission_segments(pass_event, min_elevation):
    """(TopoPoint, dwell seconds) for track points above ``min_elevation``.

    Each point owns half of the interval to each neighbour.
    """
    tr = pass_event.track
    t = np.array([p.epoch for p in tr])
    mid = np.concatenate([[t[0]], 0.5 * (t[1:] + t[:-1]), [t[-1]]])
    dwell = np.diff(mid)
    return [(p, d) for p, d in zip(tr, dwell) if p.elevation >= min_elevation and d > 0]


@dataclass(frozen=True)
class PassOutcome:
    pointing_rms: float  # urad
    pointing_loss_db: float  # nan when lock was lost
    transmission_time: float  # s above the transmission elevation
    detections: int  # ground-station clicks over the transmission window
    tally: WcpTally | None  # WCP payload only
    locked: bool

    @property
    def mean_detection_rate(self):
        return self.detections / self.transmission_time if self.transmission_time > 0 else math.nan


def simulate_pass(config, pass_event, rng):
    """Pointing, link and photon counts for one scheduled pass.

    The pointing loop runs over ``config.pointing_window`` seconds centred
    on culmination; its empirical loss is applied to every track segment
    above the transmission elevation. WCP counts come from the aggregate
    sampler; the entangled payload draws pair arrivals and detector noise.
    """
    half = 0.5 * config.pointing_window
    offset = max(pass_event.culmination_epoch - half - pass_event.rise_epoch, 0.0)
    run = simulate_pointing_run(
        config.coarse,
        config.tracker,
        config.steering,
        pass_event,
        config.turbulence_tilt,
        int(rng.integers(2**63)),
        duration=config.pointing_window,
        start_offset=offset,
    )
    loss = jitter_summary_to_loss(run, config.source)
    segments = transmission_segments(pass_event, config.transmission_min_elevation)
    t_tx = float(sum(d for _, d in segments))
    if loss is None or not segments:
        return PassOutcome(run.rms_radial, math.nan if loss is None else loss, t_tx, 0, None, loss is not None)
    channel = [
        (link_budget(config.source, point, config.receiver_diameter, 0.0, config.optics_efficiency).total + loss, dwell)
        for point, dwell in segments
    ]
    if config.payload is PayloadKind.ENTANGLED:
        det = config.detector
        clicks = 0
        for db, dwell in channel:
            pairs = rng.poisson(config.pair_rate * dwell)
            clicks += int(rng.binomial(pairs, 10 ** (db / 10) * det.efficiency))
            clicks += int(rng.poisson((det.dark_rate + det.background_rate) * dwell))
        return PassOutcome(run.rms_radial, loss, t_tx, clicks, None, True)

    pulses = np.zeros(3, dtype=np.int64)
    clicks, sifted, errors = pulses.copy(), pulses.copy(), pulses.copy()
    y1_num = y1_den = e1_num = e1_den = 0.0
    for db, dwell in channel:
        tally = simulate_wcp_aggregate(
            config.wcp, dwell, db, config.detector, int(rng.integers(2**63)), config.misalignment
        )
        pulses += tally.pulses
        clicks += tally.clicks
        sifted += tally.sifted
        errors += tally.errors
        n1 = tally.pulses.sum()
        y1_num += tally.truth_y1 * n1
        y1_den += n1
        if tally.sifted.sum():
            e1_num += np.nan_to_num(tally.truth_e1) * tally.sifted.sum()
            e1_den += tally.sifted.sum()
    total = WcpTally(pulses, clicks, sifted, errors, y1_num / y1_den, e1_num / e1_den if e1_den else math.nan)
    return PassOutcome(run.rms_radial, loss, t_tx, int(clicks.sum()), total, True)


def run_mission(config, months, seed):
    """Propagate with drag, find experiment passes per month and run the greedy schedule.

    Every dark pass culminating above the experiment threshold is an
    opportunity; it is attempted when the weather draw is clear and the
    battery check passes. Data generated by experiments is drained by
    ``station_count`` contacts, ``contacts_per_day`` times a day.
    """
    if months < 1:
        raise ModelInputError("months must be >= 1")
    rng = np.random.default_rng(seed)
    scenario = SolarActivityScenario(config.solar_activity, config.start)
    duration = months * SECONDS_PER_MONTH
    traj = propagate(
        circular_state(config.altitude, config.inclination),
        config.body,
        scenario,
        duration=duration,
        step=config.cadence,
        start=config.start,
    )
    alt = traj.altitudes
    below = np.flatnonzero(alt < EXPERIMENTS_END_ALTITUDE)
    end_s = float(traj.epochs[below[0]]) if below.size else None

    passes = [p for p in find_passes(traj, config.station) if end_s is None or p.rise_epoch < end_s]
    month_of = [int(p.rise_epoch // SECONDS_PER_MONTH) for p in passes]
    stats = []
    for m in range(months):
        sel = [p for p, k in zip(passes, month_of) if k == m]
        lo, hi = np.searchsorted(traj.epochs, [m * SECONDS_PER_MONTH, (m + 1) * SECONDS_PER_MONTH])
        mean_alt = float(alt[lo:hi].mean()) / 1e3 if hi > lo else math.nan
        dur = float(np.mean([p.duration_above_track_floor for p in sel])) / 60.0 if sel else math.nan
        stats.append(MonthStats(m + 1, len(sel), dur, mean_alt))

    summaries = []
    for p in passes:
        clear = bool(rng.random() < config.weather_clear_probability)
        energy = energy_budget(config, p.duration_above_track_floor)
        scheduled = clear and not energy.exceeds_limit
        rms = loss = rate = math.nan
        data = 0.0
        key = None
        if scheduled:
            out = simulate_pass(config, p, rng)
            rms, loss = out.pointing_rms, out.pointing_loss_db
            if out.locked and out.transmission_time > 0:
                if out.tally is not None:
                    key = key_report(out.tally, config.wcp)
                rate = out.mean_detection_rate
                rate_kw = {"pulse_rate": config.wcp.pulse_rate, "pair_rate": config.pair_rate}
                data = data_budget(config.payload, out.transmission_time, **rate_kw) / 8.0
            else:
                scheduled = False
        summaries.append(
            PassSummary(
                float(p.rise_epoch),
                float(p.max_elevation),
                float(p.duration_above_track_floor),
                float(sum(d for _, d in transmission_segments(p, config.transmission_min_elevation))),
                clear,
                scheduled,
                float(energy.depth_of_discharge),
                float(rms),
                float(loss),
                float(rate),
                data,
                key,
            )
        )

    # data backlog, one step per contact round
    step = SECONDS_PER_DAY / config.contacts_per_day
    n_steps = int(math.ceil(traj.epochs[-1] / step)) + 1
    generated = np.zeros(n_steps)
    for s in summaries:
        if s.data_bytes:
            generated[min(int(s.rise_epoch // step), n_steps - 1)] += s.data_bytes
    backlog = backlog_series(generated, contact_capacity(config))
    days = np.arange(n_steps + 1) * step / SECONDS_PER_DAY

    daily = np.searchsorted(traj.epochs, np.arange(0.0, traj.epochs[-1] + 1.0, SECONDS_PER_DAY))
    daily = daily[daily < len(traj.epochs)]
    return MissionReport(
        stats,
        summaries,
        traj.epochs[daily] / SECONDS_PER_DAY,
        alt[daily] / 1e3,
        days,
        backlog,
        end_s / SECONDS_PER_DAY if end_s is not None else None,
    )
