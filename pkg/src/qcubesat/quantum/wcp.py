"""Weak-coherent-pulse BB84 source, channel, and sifting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from ..errors import ModelInputError
from .records import DetectionRecord, PhotonStream, detect


class IntensityClass(enum.IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


@dataclass(frozen=True)
class WcpSourceConfig:
    pulse_rate: float = 100e6  # Hz
    mean_photons_signal: float = 0.5
    mean_photons_decoy: float = 0.1
    vacuum_fraction: float = 0.1
    decoy_fraction: float = 0.2
    signal_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        fr = (self.signal_fraction, self.decoy_fraction, self.vacuum_fraction)
        if min(fr) < 0 or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ModelInputError("intensity fractions must be non-negative and sum to 1")
        if not 0.0 <= self.mean_photons_decoy < self.mean_photons_signal:
            raise ModelInputError("need 0 <= decoy intensity < signal intensity")
        if self.pulse_rate <= 0:
            raise ModelInputError("pulse rate must be positive")

    @property
    def fractions(self):
        return np.array([self.signal_fraction, self.decoy_fraction, self.vacuum_fraction])

    @property
    def intensities(self):
        return np.array([self.mean_photons_signal, self.mean_photons_decoy, 0.0])

    def pulse_count(self, duration):
        return int(round(self.pulse_rate * duration))


@dataclass(frozen=True)
class WcpPulses:
    """Sender-side truth for every pulse slot."""

    config: WcpSourceConfig
    start: float
    intensity: np.ndarray  # IntensityClass per slot
    basis: np.ndarray
    bit: np.ndarray
    photons: np.ndarray

    def __len__(self):
        return len(self.photons)

    @property
    def duration(self):
        return len(self) / self.config.pulse_rate

    @property
    def epochs(self):
        return self.start + np.arange(len(self)) / self.config.pulse_rate

    def stream(self):
        """Non-empty pulses as a photon stream (vacuum slots cannot click)."""
        idx = np.flatnonzero(self.photons)
        return PhotonStream(
            self.start + idx / self.config.pulse_rate,
            self.photons[idx],
            self.basis[idx],
            self.bit[idx],
            idx.astype(np.int64),
            self.start,
            self.duration,
        )


def emit_wcp(config, duration, seed=None, start=0.0):
    """Photon-exact pulse train (desk scale; see :func:`simulate_wcp_aggregate` for full passes)."""
    if duration <= 0:
        raise ModelInputError("duration must be positive")
    n = config.pulse_count(duration)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    cls = rng.choice(3, size=n, p=config.fractions).astype(np.int8)
    basis = rng.integers(0, 2, n, dtype=np.int8)
    bit = rng.integers(0, 2, n, dtype=np.int8)
    photons = rng.poisson(config.intensities[cls]).astype(np.int32)
    return WcpPulses(config, start, cls, basis, bit, photons)


def link_transmission(link):
    """Power transmission of a LinkBudget (or a bare dB figure)."""
    total = getattr(link, "total", link)
    if not math.isfinite(total):
        raise ModelInputError("link loss must be finite")
    return min(10.0 ** (total / 10.0), 1.0)


def apply_channel(stream, link, detector, seed, error_probability=0.0):
    """Send ``stream`` (WcpPulses or PhotonStream) through ``link`` into ``detector``.

    ``error_probability`` is the chance a same-basis signal photon is
    registered with the wrong bit (misalignment / depolarisation).
    """
    if isinstance(stream, WcpPulses):
        stream = stream.stream()
    rng = np.random.default_rng(seed)
    return detect(stream, link_transmission(link), detector, rng, error_probability)


@dataclass(frozen=True)
class WcpTally:
    """Per-intensity-class counts, ordered (signal, decoy, vacuum).

    ``clicks`` counts slot-matched detections in either basis; ``sifted``
    and ``errors`` count the basis-matched subset. ``truth_y1``/``truth_e1``
    come from the simulation-truth channel.
    """

    pulses: np.ndarray
    clicks: np.ndarray
    sifted: np.ndarray
    errors: np.ndarray
    truth_y1: float = math.nan
    truth_e1: float = math.nan

    @property
    def sent_pulses(self):
        return int(self.pulses.sum())

    @property
    def sifted_bits(self):
        return int(self.sifted.sum())

    @property
    def qber_defined(self):
        return self.sifted_bits > 0

    @property
    def qber(self):
        return float(self.errors.sum() / self.sifted_bits) if self.qber_defined else math.nan

    def gain(self, cls):
        return float(self.clicks[cls] / self.pulses[cls]) if self.pulses[cls] else math.nan

    def error_rate(self, cls):
        return float(self.errors[cls] / self.sifted[cls]) if self.sifted[cls] else math.nan


def sift_bb84(pulses, received, window):
    """Assign clicks to pulse slots and keep the basis-matched ones.

    A click belongs to the nearest slot when it lies within ``window``/2 of
    the slot epoch; only the first click per slot counts.
    """
    if window <= 0:
        raise ModelInputError("pairing window must be positive")
    rate = pulses.config.pulse_rate
    rel = (received.timestamps - pulses.start) * rate
    slot = np.rint(rel).astype(np.int64)
    ok = (np.abs(rel - slot) <= 0.5 * window * rate) & (slot >= 0) & (slot < len(pulses))
    slot, idx = np.unique(slot[ok], return_index=True)
    rx_basis = received.basis[ok][idx]
    rx_bit = received.bit[ok][idx]

    cls = pulses.intensity[slot]
    same = rx_basis == pulses.basis[slot]
    wrong = same & (rx_bit != pulses.bit[slot])
    tally = lambda m: np.bincount(cls[m], minlength=3)
    pulses_per_class = np.bincount(pulses.intensity, minlength=3)

    # simulation truth: single-photon yield and error over all classes
    one = pulses.photons[slot] == 1
    n_one = int(np.count_nonzero(pulses.photons == 1))
    y1 = np.count_nonzero(one) / n_one if n_one else math.nan
    s1 = np.count_nonzero(one & same)
    e1 = np.count_nonzero(one & wrong) / s1 if s1 else math.nan
    return WcpTally(pulses_per_class, tally(np.ones_like(same)), tally(same), tally(wrong), y1, e1)


def simulate_wcp_aggregate(config, duration, link, detector, seed, error_probability=0.0, window=2e-9):
    """Counts of a full pass without materialising pulses.

    Draws the pulse count per (class, photon number) cell from a multinomial,
    then signal clicks, noise-only clicks, sifting and bit errors as binomials.
    Matches :func:`emit_wcp` + :func:`apply_channel` + :func:`sift_bb84` in
    distribution, apart from dead time, which is negligible at pass rates.
    """
    if duration <= 0:
        raise ModelInputError("duration must be positive")
    rng = np.random.default_rng(seed)
    eta = link_transmission(link) * detector.efficiency
    p_noise = -math.expm1(-(detector.dark_rate + detector.background_rate) * window)
    n_total = config.pulse_count(duration)
    per_class = rng.multinomial(n_total, config.fractions)

    n_max = 16
    pulses = np.zeros(3, dtype=np.int64)
    clicks = np.zeros(3, dtype=np.int64)
    sifted = np.zeros(3, dtype=np.int64)
    errors = np.zeros(3, dtype=np.int64)
    one_pulses = one_clicks = one_sifted = one_errors = 0
    for c, mu in enumerate(config.intensities):
        pmf = poisson.pmf(np.arange(n_max), mu)
        pmf[-1] += max(0.0, 1.0 - pmf.sum())
        counts = rng.multinomial(per_class[c], pmf / pmf.sum())
        for n, cnt in enumerate(counts):
            if cnt == 0:
                continue
            p_sig = -math.expm1(n * math.log1p(-eta)) if eta < 1 else float(n > 0)
            sig = rng.binomial(cnt, p_sig)
            noise = rng.binomial(cnt - sig, p_noise)
            sig_s = rng.binomial(sig, 0.5)
            noise_s = rng.binomial(noise, 0.5)
            err = rng.binomial(sig_s, error_probability) + rng.binomial(noise_s, 0.5)
            pulses[c] += cnt
            clicks[c] += sig + noise
            sifted[c] += sig_s + noise_s
            errors[c] += err
            if n == 1:
                one_pulses += cnt
                one_clicks += sig + noise
                one_sifted += sig_s + noise_s
                one_errors += err
    y1 = one_clicks / one_pulses if one_pulses else math.nan
    e1 = one_errors / one_sifted if one_sifted else math.nan
    return WcpTally(pulses, clicks, sifted, errors, y1, e1)
