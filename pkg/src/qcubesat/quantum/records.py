"""Photon streams and detector-side event records."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import ModelInputError


class Basis(enum.IntEnum):
    HV = 0
    DA = 1


class Origin(enum.IntEnum):
    SIGNAL = 0
    DARK = 1
    BACKGROUND = 2


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.5
    dark_rate: float = 100.0  # counts/s
    dead_time: float = 50e-9  # s
    jitter_sigma: float = 350e-12  # s
    background_rate: float = 500.0  # counts/s, stray light

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ModelInputError("detector efficiency must lie in (0, 1]")
        if self.dead_time < 0 or self.jitter_sigma < 0:
            raise ModelInputError("dead time and jitter must be non-negative")
        if self.dark_rate < 0 or self.background_rate < 0:
            raise ModelInputError("noise rates must be non-negative")


@dataclass(frozen=True)
class PhotonStream:
    """Optical pulses leaving a source toward a detector.

    ``basis``/``bit`` are the polarisation the light carries: the prepared
    state for WCP, the partner's measured state (after visibility noise)
    for an entangled pair.
    """

    times: np.ndarray
    photons: np.ndarray
    basis: np.ndarray
    bit: np.ndarray
    index: np.ndarray  # source-side truth: slot or pair number
    start: float
    duration: float

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class DetectionRecord:
    """Time-ordered detector clicks on the receiver clock.

    ``truth_origin`` and ``truth_index`` belong to the simulation-truth
    channel; protocol operations never read them.
    """

    timestamps: np.ndarray
    basis: np.ndarray
    bit: np.ndarray
    truth_origin: np.ndarray = field(repr=False)
    truth_index: np.ndarray = field(repr=False)
    start: float = 0.0
    duration: float = 0.0

    def __len__(self):
        return len(self.timestamps)

    def shifted(self, delta):
        """Same events seen by a clock running ``delta`` seconds ahead."""
        return DetectionRecord(
            self.timestamps + delta,
            self.basis,
            self.bit,
            self.truth_origin,
            self.truth_index,
            self.start + delta,
            self.duration,
        )

    def select(self, mask):
        return DetectionRecord(
            self.timestamps[mask],
            self.basis[mask],
            self.bit[mask],
            self.truth_origin[mask],
            self.truth_index[mask],
            self.start,
            self.duration,
        )


@numba.njit(cache=True)
def _dead_time_mask(t, dead):
    keep = np.zeros(t.shape[0], dtype=np.bool_)
    last = -np.inf
    for i in range(t.shape[0]):
        if t[i] - last >= dead:
            keep[i] = True
            last = t[i]
    return keep


def dead_time_filter(times, dead_time):
    """Mask of clicks surviving a non-paralysable dead time (times sorted)."""
    t = np.asarray(times, dtype=float)
    if dead_time <= 0:
        keep = np.ones(t.shape[0], dtype=bool)
        if t.shape[0] > 1:
            keep[1:] = np.diff(t) > 0
        return keep
    return _dead_time_mask(t, float(dead_time))


def detect(stream, transmission, detector, rng, error_probability=0.0, jitter=True):
    """Per-photon survival, noise injection, jitter, dead time and measurement."""
    if not 0.0 <= transmission <= 1.0:
        raise ModelInputError("channel transmission must lie in [0, 1]")
    p = transmission * detector.efficiency
    # a pulse clicks when at least one of its photons survives
    p_click = -np.expm1(stream.photons * np.log1p(-p)) if p < 1.0 else (stream.photons > 0).astype(float)
    hit = rng.random(len(stream)) < p_click
    n_sig = int(hit.sum())

    t_end = stream.start + stream.duration
    n_dark = rng.poisson(detector.dark_rate * stream.duration)
    n_bg = rng.poisson(detector.background_rate * stream.duration)
    noise_t = rng.uniform(stream.start, t_end, n_dark + n_bg)

    times = np.concatenate([stream.times[hit], noise_t])
    origin = np.concatenate(
        [
            np.full(n_sig, Origin.SIGNAL, dtype=np.int8),
            np.full(n_dark, Origin.DARK, dtype=np.int8),
            np.full(n_bg, Origin.BACKGROUND, dtype=np.int8),
        ]
    )
    index = np.concatenate([stream.index[hit], np.full(n_dark + n_bg, -1, dtype=np.int64)])
    src_basis = np.concatenate([stream.basis[hit], np.zeros(n_dark + n_bg, dtype=np.int8)])
    src_bit = np.concatenate([stream.bit[hit], np.zeros(n_dark + n_bg, dtype=np.int8)])
    n = times.shape[0]

    if jitter and detector.jitter_sigma > 0:
        times = times + rng.normal(0.0, detector.jitter_sigma, n)
    rx_basis = rng.integers(0, 2, n, dtype=np.int8)
    random_bit = rng.integers(0, 2, n, dtype=np.int8)
    flip = (rng.random(n) < error_probability).astype(np.int8)
    matched = (origin == Origin.SIGNAL) & (rx_basis == src_basis)
    bit = np.where(matched, src_bit ^ flip, random_bit).astype(np.int8)

    order = np.argsort(times, kind="stable")
    times, origin, index, rx_basis, bit = times[order], origin[order], index[order], rx_basis[order], bit[order]
    keep = dead_time_filter(times, detector.dead_time)
    return DetectionRecord(
        times[keep], rx_basis[keep], bit[keep], origin[keep], index[keep], stream.start, stream.duration
    )
