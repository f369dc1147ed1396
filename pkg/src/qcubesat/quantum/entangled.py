"""Entangled-pair source, clockless time-offset recovery, and coincidence QBER."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.special import ndtri_exp
from scipy.stats import poisson

from ..errors import ModelInputError
from .records import DetectionRecord, Origin, PhotonStream


@dataclass(frozen=True)
class EntangledSourceConfig:
    pair_rate: float = 5e6  # generated pairs/s
    heralding_efficiency_local: float = 0.3
    intrinsic_visibility: float = 0.94
    timing_jitter_sigma: float = 350e-12  # s, local detector

    def __post_init__(self):
        if self.pair_rate <= 0:
            raise ModelInputError("pair rate must be positive")
        if not 0.7 < self.intrinsic_visibility <= 1.0:
            raise ModelInputError("visibility must lie in (0.7, 1]")
        if not 0.0 < self.heralding_efficiency_local <= 1.0:
            raise ModelInputError("local heralding efficiency must lie in (0, 1]")


def emit_entangled(config, duration, seed, start=0.0):
    """Poisson pair train split into a local record and a transmitted stream.

    Outcomes follow the correlated convention: in a shared basis the remote
    photon repeats the local bit with probability (1 + V)/2, so the
    same-basis QBER is (1 - V)/2.
    """
    if duration <= 0:
        raise ModelInputError("duration must be positive")
    rng = np.random.default_rng(seed)
    n = rng.poisson(config.pair_rate * duration)
    t = np.sort(rng.uniform(start, start + duration, n))
    basis = rng.integers(0, 2, n, dtype=np.int8)
    bit = rng.integers(0, 2, n, dtype=np.int8)
    flip = (rng.random(n) < 0.5 * (1.0 - config.intrinsic_visibility)).astype(np.int8)
    idx = np.arange(n, dtype=np.int64)

    herald = rng.random(n) < config.heralding_efficiency_local
    tl = t[herald] + rng.normal(0.0, config.timing_jitter_sigma, int(herald.sum()))
    order = np.argsort(tl, kind="stable")
    local = DetectionRecord(
        tl[order],
        basis[herald][order],
        bit[herald][order],
        np.full(order.size, Origin.SIGNAL, dtype=np.int8),
        idx[herald][order],
        start,
        duration,
    )
    remote = PhotonStream(t, np.ones(n, dtype=np.int32), basis, bit ^ flip, idx, start, duration)
    return local, remote


@dataclass(frozen=True)
class OffsetResult:
    offset: float  # s, remote clock = local clock + offset
    significance: float  # global (trials-corrected) Gaussian-equivalent sigma
    coincidences: int
    locked: bool


LOCK_THRESHOLD = 5.0
MAX_FFT_BINS = 1 << 25


def _lags_in_window(tl, tr, lo, hi):
    """All differences tr - tl falling in [lo, hi)."""
    a = np.searchsorted(tl, tr - hi, side="right")
    b = np.searchsorted(tl, tr - lo, side="right")
    counts = b - a
    if counts.sum() == 0:
        return np.empty(0)
    rep = np.repeat(np.arange(tr.size), counts)
    pos = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(a, counts)
    return tr[rep] - tl[pos]


def match_offset(local, remote, search_span, bin, coarse_bin=250e-9, candidates=200, threshold=LOCK_THRESHOLD):
    """Recover the clock offset between two timestamp records.

    A binned FFT cross-correlation over +/- ``search_span`` nominates the
    ``candidates`` strongest coarse lags (adjacent lags summed, so a peak
    straddling two bins is not split). Each is re-histogrammed at ``bin``;
    the best fine peak is refined by a background-subtracted centroid.
    Significance compares the peak (two adjacent fine bins) with the local
    Poisson background, corrected for every fine lag in the span.
    """
    tl = np.asarray(local.timestamps, dtype=float)
    tr = np.asarray(remote.timestamps, dtype=float)
    if tl.size == 0 or tr.size == 0:
        raise ModelInputError("both records must be non-empty")
    if bin <= 0 or search_span <= 0:
        raise ModelInputError("bin and search span must be positive")
    coarse_bin = max(coarse_bin, 2 * bin)
    t_ref = tl[0]
    n_l = int((tl[-1] - t_ref) / coarse_bin) + 1
    n_lags = int(math.ceil(2.0 * search_span / coarse_bin)) + 1
    size = scipy.fft.next_fast_len(2 * n_l + n_lags, real=True)
    if size > MAX_FFT_BINS:
        coarse_bin *= size / MAX_FFT_BINS
        return match_offset(local, remote, search_span, bin, coarse_bin, candidates, threshold)

    li = ((tl - t_ref) / coarse_bin).astype(np.int64)
    ri = np.floor((tr - t_ref + search_span) / coarse_bin).astype(np.int64)
    keep = (ri >= 0) & (ri < size)
    lcount = np.bincount(li, minlength=size).astype(float)
    rcount = np.bincount(ri[keep], minlength=size).astype(float)
    corr = scipy.fft.irfft(np.conj(scipy.fft.rfft(lcount)) * scipy.fft.rfft(rcount), size)[:n_lags]
    pair = corr[:-1] + corr[1:]
    top = np.argsort(pair)[::-1][: min(candidates, pair.size)]

    best = None
    for k in top:
        lo = (k - 1) * coarse_bin - search_span
        hi = (k + 2) * coarse_bin - search_span
        d = _lags_in_window(tl, tr, lo, hi)
        if d.size == 0:
            continue
        first = math.floor(lo / bin)
        hist = np.bincount(np.floor(d / bin).astype(np.int64) - first, minlength=int(math.ceil(hi / bin)) - first)
        pair_f = hist[:-1] + hist[1:]
        j = int(np.argmax(pair_f))
        if best is None or pair_f[j] > best[0]:
            best = (int(pair_f[j]), hist, first, j)
    if best is None:
        return OffsetResult(math.nan, 0.0, 0, False)

    peak, hist, first, j = best
    lam = max(2.0 * float(np.median(hist)), 2.0 * tl.size * tr.size * bin / max(tl[-1] - tl[0], bin))
    a, b = max(j - 2, 0), min(j + 4, hist.size)
    w = np.clip(hist[a:b] - lam / 2.0, 0.0, None)
    centers = (first + np.arange(a, b) + 0.5) * bin
    offset = float((w * centers).sum() / w.sum()) if w.sum() > 0 else float(centers[j - a + 1])

    trials = 2.0 * search_span / bin
    log_p = float(poisson.logsf(peak - 1, lam))
    if not math.isfinite(log_p):
        log_p = float(poisson.logpmf(peak, lam))  # dominant tail term
    # Sidak: p_global = 1 - (1 - p)^trials
    log_pg = math.log(-math.expm1(trials * math.log1p(-math.exp(log_p)))) if log_p > -30 else log_p + math.log(trials)
    sig = float(-ndtri_exp(min(log_pg, math.log(0.5))))
    return OffsetResult(offset, sig, int(round(w.sum())), sig >= threshold)


@dataclass(frozen=True)
class CoincidenceResult:
    qber: float
    coincidences: int
    same_basis: int
    errors: int
    coincidence_rate: float  # 1/s
    accidental_rate: float  # 1/s, from the shifted window
    qber_defined: bool


def _pairs(tl, tr, window):
    """Index pairs (local, remote) where the nearest local event is within window/2."""
    pos = np.searchsorted(tl, tr)
    left = np.clip(pos - 1, 0, tl.size - 1)
    right = np.clip(pos, 0, tl.size - 1)
    near = np.where(np.abs(tl[right] - tr) < np.abs(tl[left] - tr), right, left)
    hit = np.abs(tl[near] - tr) <= 0.5 * window
    return near[hit], np.flatnonzero(hit)


def coincidence_qber(local, remote, window, offset=0.0, accidental_shift=None):
    """Same-basis QBER of coincidences after removing ``offset`` from remote times.

    Accidentals are counted in a window displaced by ``accidental_shift``
    (default 1000 windows, well outside the correlation peak).
    """
    if window <= 0:
        raise ModelInputError("coincidence window must be positive")
    tl = np.asarray(local.timestamps, dtype=float)
    tr = np.asarray(remote.timestamps, dtype=float) - offset
    if tl.size == 0 or tr.size == 0:
        return CoincidenceResult(math.nan, 0, 0, 0, 0.0, 0.0, False)
    duration = max(local.duration, remote.duration) or (max(tl[-1], tr[-1]) - min(tl[0], tr[0]))
    li, ri = _pairs(tl, tr, window)
    shift = 1000.0 * window if accidental_shift is None else accidental_shift
    acc_l, _ = _pairs(tl, tr + shift, window)
    same = local.basis[li] == remote.basis[ri]
    err = int(np.count_nonzero(same & (local.bit[li] != remote.bit[ri])))
    n_same = int(np.count_nonzero(same))
    return CoincidenceResult(
        err / n_same if n_same else math.nan,
        int(li.size),
        n_same,
        err,
        li.size / duration,
        acc_l.size / duration,
        n_same > 0,
    )
