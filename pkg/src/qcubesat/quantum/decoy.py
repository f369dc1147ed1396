"""Asymptotic vacuum + weak-decoy BB84 key rate.

With gains Q and error rates E per intensity (signal mu, decoy nu, vacuum):

    Y0      = Q_vac
    Y1_L    = mu / (mu nu - nu^2) * (Q_nu e^nu - Q_mu e^mu nu^2/mu^2 - (mu^2 - nu^2)/mu^2 Y0)
    Q1_L    = Y1_L mu e^-mu
    e1_U    = (E_nu Q_nu e^nu - e0 Y0) / (Y1_L nu),   e0 = 1/2
    R       = q [Q1_L (1 - h2(e1_U)) - Q_mu f_EC h2(E_mu)],   q = 1/2

R is the secure fraction per signal pulse, clamped at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ModelInputError
from .wcp import IntensityClass as C

F_EC = 1.16
E0 = 0.5
SIFT_FACTOR = 0.5


def h2(p):
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class DecoyBounds:
    y1_lower: float
    e1_upper: float
    q1_lower: float
    key_fraction: float  # secure bits per signal pulse
    consistent: bool  # False when the bounds cross and the key is forced to 0


def decoy_key_rate(q_mu, e_mu, q_nu, e_nu, q_vac, mu=0.5, nu=0.1, f_ec=F_EC):
    if not 0.0 <= nu < mu:
        raise ModelInputError("need 0 <= nu < mu")
    for name, q in (("Q_mu", q_mu), ("Q_nu", q_nu)):
        if not 0.0 < q < 1.0:
            raise ModelInputError(f"{name} must lie in (0, 1)")
    if not 0.0 <= q_vac < 1.0:
        raise ModelInputError("Q_vac must lie in [0, 1)")
    y0 = q_vac
    y1 = (
        mu
        / (mu * nu - nu * nu)
        * (q_nu * math.exp(nu) - q_mu * math.exp(mu) * nu * nu / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0)
    )
    if not y1 > 0.0:
        return DecoyBounds(y1, 0.5, 0.0, 0.0, False)
    e1 = (e_nu * q_nu * math.exp(nu) - E0 * y0) / (y1 * nu)
    consistent = e1 <= 0.5 + 1e-12
    e1 = min(max(e1, 0.0), 0.5)
    q1 = y1 * mu * math.exp(-mu)
    key = SIFT_FACTOR * (q1 * (1.0 - h2(e1)) - q_mu * f_ec * h2(e_mu))
    if not consistent:
        key = 0.0
    return DecoyBounds(y1, e1, q1, max(key, 0.0), consistent)


@dataclass(frozen=True)
class KeyReport:
    sent_pulses: int
    sifted_bits: int
    qber: float
    y1_lower: float
    e1_upper: float
    secure_key_length: float  # bits, asymptotic
    qber_defined: bool = True
    bounds_consistent: bool = True


def key_report(tally, config):
    """Key accounting for a :class:`WcpTally`."""
    if not tally.qber_defined or tally.clicks[C.SIGNAL] == 0 or tally.clicks[C.DECOY] == 0:
        return KeyReport(tally.sent_pulses, tally.sifted_bits, tally.qber, 0.0, 0.5, 0.0, tally.qber_defined, False)
    b = decoy_key_rate(
        tally.gain(C.SIGNAL),
        tally.error_rate(C.SIGNAL),
        tally.gain(C.DECOY),
        tally.error_rate(C.DECOY),
        tally.gain(C.VACUUM) if tally.pulses[C.VACUUM] else 0.0,
        config.mean_photons_signal,
        config.mean_photons_decoy,
    )
    return KeyReport(
        tally.sent_pulses,
        tally.sifted_bits,
        tally.qber,
        b.y1_lower,
        b.e1_upper,
        b.key_fraction * float(tally.pulses[C.SIGNAL]),
        True,
        b.consistent,
    )
