"""Two-stage pointing chain: ADCS body pointing plus beacon-tracked steering mirror.

Angles are in microradians, per axis (x along-track, y cross/elevation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.signal import lfilter
from scipy.special import erf

from .errors import LockLostError, ModelInputError
from .geometry import dispersion_offset, point_ahead, track_arrays
from .optolink import beam_half_angle_1e2

BUFFETING_CEILING = 50.0  # urad


@dataclass(frozen=True)
class CoarsePointingModel:
    bias: float = 20.0  # urad, slow drift amplitude
    sigma: float = 40.0  # urad, 1-sigma per axis, coloured
    drift_timescale: float = 120.0  # s
    buffeting_amplitude: float = 20.0  # urad, random-walk cap
    noise_bandwidth: float = 0.1  # Hz, first-order low-pass corner
    buffeting_rate: float = 2.0  # urad/sqrt(s), random-walk diffusion
    offload_gain: float = 0.05  # 1/s, BSM offset fed back to the ADCS

    def __post_init__(self):
        if self.sigma < 0 or self.bias < 0 or self.buffeting_amplitude < 0:
            raise ModelInputError("coarse pointing amplitudes must be non-negative")
        if self.buffeting_amplitude > BUFFETING_CEILING:
            raise ModelInputError(f"buffeting amplitude is capped at {BUFFETING_CEILING} urad")


@dataclass(frozen=True)
class BeaconTrackerModel:
    pixel_pitch_angle: float = 4.0  # urad/pixel; 5.5 um pixels behind f = 1400 mm
    frame_rate: float = 300.0  # Hz
    psf_sigma: float = 1.5  # pixels
    signal_photons_per_frame: float = 10_000.0  # e-
    read_noise: float = 10.0  # e- RMS per pixel
    roi_mode: bool = False
    imu_drift: float = 0.5  # urad RMS between frames
    window_half_width: int = 5  # pixels; narrower windows bias bright spots

    def __post_init__(self):
        limit = 1000.0 if self.roi_mode else 330.0
        if not 0 < self.frame_rate <= limit:
            raise ModelInputError(f"frame rate must lie in (0, {limit:g}] Hz for this readout mode")
        if self.psf_sigma < 0.5:
            raise ModelInputError("beacon image must be defocused to psf_sigma >= 0.5 pixel")

    @property
    def snr(self):
        """Frame SNR: signal over the RSS of shot and read noise in the window."""
        n_pix = (2 * self.window_half_width + 1) ** 2
        s = self.signal_photons_per_frame
        if math.isinf(s):
            return math.inf
        return s / math.sqrt(s + n_pix * self.read_noise**2)

    @property
    def centroid_sigma(self):
        """Per-axis centroid noise [urad] from the psf/SNR scaling law."""
        return CENTROID_SCALING * self.psf_sigma / self.snr * self.pixel_pitch_angle


# measured over SNR in [10, 1000]; see tests/test_pointing.py
CENTROID_SCALING = 1.1


@dataclass(frozen=True)
class SteeringModel:
    excursion_limit: float = 3.0  # deg, +/- half range
    actuation_bandwidth: float = 200.0  # Hz
    quantization: float = 0.05  # urad
    integral_gain: float = 250.0  # 1/s

    def __post_init__(self):
        if self.excursion_limit < 1.0:
            raise ModelInputError("excursion limit must be >= 1 deg")
        if self.quantization < 0 or self.actuation_bandwidth <= 0:
            raise ModelInputError("quantization must be >= 0 and bandwidth > 0")


@dataclass(frozen=True)
class PointingRun:
    time_step: float
    epochs: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)  # urad
    y: np.ndarray = field(repr=False)  # urad
    rms_radial: float
    fraction_within_3urad: float
    bsm_saturation_events: int
    lock_lost: bool

    @property
    def residual_error_series(self):
        return np.column_stack([self.epochs, self.x, self.y])


@dataclass(frozen=True)
class Centroid:
    x: float
    y: float
    snr: float


# --- Centroiding --------------------------------------------------------------


def render_spot(x0, y0, total, psf_sigma, shape=(15, 15)):
    """Expected photo-electrons per pixel of a pixel-integrated Gaussian spot."""
    ey = np.arange(shape[0] + 1) - 0.5
    ex = np.arange(shape[1] + 1) - 0.5
    s = math.sqrt(2.0) * psf_sigma
    cx = np.diff(0.5 * erf((ex - x0) / s))
    cy = np.diff(0.5 * erf((ey - y0) / s))
    return np.outer(cy, cx) * total


def centroid(image, read_noise=None, threshold_sigma=3.0, half_width=5, background=0.0):
    """Thresholded centre-of-gravity of the brightest spot.

    Pixels within ``half_width`` of the peak are weighted by their excess
    over ``background + threshold_sigma * read_noise``. When ``read_noise``
    is None it is estimated from the median absolute deviation of the frame.
    Raises :class:`LockLostError` when no pixel clears the threshold.
    """
    img = np.asarray(image, dtype=float) - background
    if read_noise is None:
        read_noise = 1.4826 * float(np.median(np.abs(img - np.median(img))))
    thresh = threshold_sigma * read_noise
    py, px = np.unravel_index(int(np.argmax(img)), img.shape)
    if not img[py, px] > thresh:
        raise LockLostError("no pixel above the detection threshold")
    ys = slice(max(py - half_width, 0), min(py + half_width + 1, img.shape[0]))
    xs = slice(max(px - half_width, 0), min(px + half_width + 1, img.shape[1]))
    win = img[ys, xs]
    w = np.clip(win - thresh, 0.0, None)
    yy, xx = np.mgrid[ys, xs]
    total = w.sum()
    signal = np.clip(win, 0.0, None).sum()
    noise = math.sqrt(signal + win.size * read_noise**2)
    return Centroid(float((w * xx).sum() / total), float((w * yy).sum() / total), signal / noise if noise > 0 else math.inf)


# --- Closed-loop simulation ---------------------------------------------------


def _ar1(rng, n, sigma, corr_time, dt):
    """Stationary first-order Gauss-Markov sequence."""
    if sigma == 0 or n == 0:
        return np.zeros(n)
    a = math.exp(-dt / corr_time)
    w = rng.standard_normal(n) * sigma * math.sqrt(1.0 - a * a)
    out, _ = lfilter([1.0], [1.0, -a], w, zi=[a * sigma * rng.standard_normal()])
    return out


def _bounded_walk(rng, n, rate, cap, dt):
    steps = rng.standard_normal(n) * rate * math.sqrt(dt)
    return _clamped_cumsum(steps, cap)


@numba.njit(cache=True)
def _clamped_cumsum(steps, cap):
    out = np.empty_like(steps)
    acc = 0.0
    for i in range(steps.shape[0]):
        acc = min(max(acc + steps[i], -cap), cap)
        out[i] = acc
    return out


@numba.njit(cache=True)
def _control_loop(raw, meas_err, imu, offsets, common_tilt, frame_steps, dt, alpha, ki, limit, quant, k_off):
    n = raw.shape[0]
    resid = np.empty((n, 2))
    cmd_need = np.empty((n, 2))
    m = np.zeros(2)
    integ = np.zeros(2)
    off = np.zeros(2)
    held = np.zeros(2)  # latest tracker error, applied one frame late
    pending = np.zeros(2)
    clamped = np.zeros(2, dtype=np.bool_)
    events = 0
    for i in range(n):
        if i % frame_steps == 0:
            held[:] = pending
            pending[:] = meas_err[i]
        for ax in range(2):
            body = raw[i, ax] + off[ax]
            need = -body - common_tilt[i, ax] + offsets[i, ax]
            est = -body - held[ax] - imu[i, ax] + offsets[i, ax]
            if i == 0:
                m[ax] = est  # mirror pre-positioned at acquisition
            u = est + integ[ax]
            m[ax] += alpha * (u - m[ax])
            integ[ax] += ki * dt * (est - m[ax])
            sat = abs(m[ax]) > limit
            if sat:
                m[ax] = limit if m[ax] > 0 else -limit
                if not clamped[ax]:
                    events += 1
            clamped[ax] = sat
            mq = m[ax] if quant == 0.0 else quant * np.round(m[ax] / quant)
            resid[i, ax] = mq - need
            cmd_need[i, ax] = need
            off[ax] += dt * k_off * (m[ax] - offsets[i, ax])
    return resid, cmd_need, events


def simulate_pointing_run(
    coarse,
    tracker,
    steering,
    pass_event,
    turbulence_tilt_sigma=1.0,
    seed=0,
    time_step=1e-3,
    duration=None,
    start_offset=0.0,
    tilt_rejection=0.5,
    tilt_corr_time=0.05,
    beacon_wavelength=532.0,
    downlink_wavelength=800.0,
):
    """Monte Carlo of the residual downlink pointing error along a pass.

    Per step the body error is bias drift + coloured noise + bounded
    buffeting, minus the ADCS offload of the mirror offset. The tracker
    sees body error plus uplink tilt plus centroid noise once per frame,
    with one frame of latency, bridged by IMU propagation (drift floor
    ``tracker.imu_drift``). The mirror follows a feed-forward plus integral
    command through a first-order actuator, clamped to the excursion limit
    and quantised. Point-ahead (along-track) and dispersion (elevation)
    offsets are computed from the pass geometry and added to the command.
    A fraction ``tilt_rejection`` of the tilt is common to the downlink.
    """
    if not pass_event.track:
        raise ModelInputError("pass track is empty")
    rng = np.random.default_rng(seed)
    t0 = pass_event.rise_epoch + start_offset
    span = pass_event.set_epoch - t0 if duration is None else duration
    if span <= 0:
        raise ModelInputError("pointing window is empty")
    n = int(round(span / time_step))
    epochs = t0 + time_step * np.arange(n)
    frame_steps = max(1, int(round(1.0 / (tracker.frame_rate * time_step))))

    tr = track_arrays(pass_event)
    pa_track = np.array([point_ahead(p) for p in pass_event.track])
    disp_track = dispersion_offset(np.clip(tr["elevation"], 10.0, 90.0), beacon_wavelength, downlink_wavelength)
    offsets = np.column_stack(
        [np.interp(epochs, tr["epoch"], pa_track), np.interp(epochs, tr["epoch"], disp_track)]
    )

    raw = np.empty((n, 2))
    tilt = np.empty((n, 2))
    imu = np.empty((n, 2))
    for ax in range(2):
        phase = rng.uniform(0.0, 2.0 * math.pi)
        drift = coarse.bias * np.sin(2.0 * math.pi * (epochs - t0) / coarse.drift_timescale + phase)
        colored = _ar1(rng, n, coarse.sigma, 1.0 / (2.0 * math.pi * coarse.noise_bandwidth), time_step)
        buffet = _bounded_walk(rng, n, coarse.buffeting_rate, coarse.buffeting_amplitude, time_step)
        raw[:, ax] = drift + colored + buffet
        tilt[:, ax] = _ar1(rng, n, turbulence_tilt_sigma, tilt_corr_time, time_step)
        imu[:, ax] = _ar1(rng, n, tracker.imu_drift, 1.0 / tracker.frame_rate, time_step)
    centroid_noise = rng.standard_normal((n, 2)) * tracker.centroid_sigma
    meas_err = tilt + centroid_noise

    alpha = -math.expm1(-2.0 * math.pi * steering.actuation_bandwidth * time_step)
    limit = math.radians(steering.excursion_limit) * 1e6
    resid, need, events = _control_loop(
        raw,
        meas_err,
        imu,
        offsets,
        tilt_rejection * tilt,
        frame_steps,
        time_step,
        alpha,
        steering.integral_gain,
        limit,
        steering.quantization,
        coarse.offload_gain,
    )
    over = np.any(np.abs(need) > limit, axis=1)
    lock_lost = _longest_run(over) * time_step > 1.0
    r2 = resid[:, 0] ** 2 + resid[:, 1] ** 2
    return PointingRun(
        time_step,
        epochs,
        resid[:, 0],
        resid[:, 1],
        float(math.sqrt(r2.mean())),
        float(np.mean(r2 <= 9.0)),
        int(events),
        bool(lock_lost),
    )


def _longest_run(mask):
    if not mask.any():
        return 0
    padded = np.concatenate([[0], mask.astype(np.int8), [0]])
    d = np.diff(padded)
    return int((np.flatnonzero(d == -1) - np.flatnonzero(d == 1)).max())


def jitter_summary_to_loss(run, source):
    """Mean instantaneous pointing loss [dB] over the residual series.

    Returns None for a lock-lost run.
    """
    if run.lock_lost:
        return None
    w = beam_half_angle_1e2(source)
    r2 = run.x**2 + run.y**2
    return 10.0 * math.log10(float(np.mean(np.exp(-2.0 * r2 / (w * w)))))


def radial_rms(x, y):
    return float(math.sqrt(np.mean(np.asarray(x) ** 2 + np.asarray(y) ** 2)))
