"""Free-space optical downlink budget.

Both source kinds are treated as a Gaussian far-field beam for capture and
pointing loss: the Gaussian waist gives its 1/e^2 half-angle directly, the
flat-top aperture is mapped to the Gaussian with the same HWHM.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelInputError

AIRY_HWHM_FACTOR = 0.514  # HWHM of the Airy pattern in units of lambda/D
HWHM_TO_1E2 = math.sqrt(2.0 / math.log(2.0))
TELESCOPE_APERTURE = 0.090  # m

ATMOSPHERE_CALIBRATION_TRANSMITTANCE = 0.70  # at 20 deg from zenith, 800 nm
ATMOSPHERE_CALIBRATION_ZENITH_DEG = 20.0
ATMOSPHERE_REFERENCE_WAVELENGTH = 800.0  # nm
# optical depth ~ lambda^-k; k = 1.3 (aerosol-dominated clear sky) by assumption
ATMOSPHERE_WAVELENGTH_EXPONENT = 1.3


class SourceKind(enum.Enum):
    FLAT_TOP = "FlatTopAperture"
    GAUSSIAN = "GaussianWaist"


@dataclass(frozen=True)
class OpticalSourceGeometry:
    kind: SourceKind
    size: float  # m: aperture diameter (flat-top) or 1/e^2 waist radius (Gaussian)
    wavelength: float = 800.0  # nm
    telescope_aperture: float = TELESCOPE_APERTURE

    def __post_init__(self):
        if not (self.size > 0 and self.wavelength > 0):
            raise ModelInputError("source dimensions and wavelength must be positive")
        if self.kind is SourceKind.GAUSSIAN and 2.0 * self.size > self.telescope_aperture + 1e-12:
            raise ModelInputError("Gaussian waist diameter exceeds the telescope aperture (truncation)")

    @classmethod
    def wcp(cls, diameter=TELESCOPE_APERTURE, wavelength=800.0):
        return cls(SourceKind.FLAT_TOP, diameter, wavelength, max(diameter, TELESCOPE_APERTURE))

    @classmethod
    def entangled(cls, waist_diameter=0.065, wavelength=800.0):
        return cls(SourceKind.GAUSSIAN, waist_diameter / 2.0, wavelength)


@dataclass(frozen=True)
class LinkBudget:
    diffraction_geometric_loss: float  # dB
    pointing_loss: float  # dB
    atmospheric_loss: float  # dB
    optics_efficiency_loss: float  # dB
    total: float  # dB
    ground_spot_diameter: float  # m
    slant_range: float  # m

    @property
    def transmission(self):
        return 10.0 ** (self.total / 10.0)


def divergence_half_angle(source):
    """Far-field divergence [urad].

    Flat-top: HWHM of the Airy pattern, 0.514 lambda/D. Gaussian: the
    1/e^2 half-angle lambda/(pi w0).
    """
    lam = source.wavelength * 1e-9
    if source.kind is SourceKind.FLAT_TOP:
        return AIRY_HWHM_FACTOR * lam / source.size * 1e6
    return lam / (math.pi * source.size) * 1e6


def beam_half_angle_1e2(source):
    """1/e^2 intensity half-angle [urad] of the equivalent Gaussian far field."""
    theta = divergence_half_angle(source)
    return theta * HWHM_TO_1E2 if source.kind is SourceKind.FLAT_TOP else theta


def ground_spot(source, slant_range):
    """Spot diameter [m] at the divergence-defining contour."""
    if slant_range < 0:
        raise ModelInputError("slant range must be non-negative")
    return 2.0 * divergence_half_angle(source) * 1e-6 * slant_range


def atmospheric_transmittance(elevation, wavelength=800.0, exponent=ATMOSPHERE_WAVELENGTH_EXPONENT):
    """Clear-sky transmittance T_zenith(lambda) ** sec(z)."""
    el = np.asarray(elevation, dtype=float)
    if np.any(el < 10.0) or np.any(el > 90.0):
        raise ModelInputError("transmittance model needs elevation in [10, 90] deg")
    tau_ref = -math.log(ATMOSPHERE_CALIBRATION_TRANSMITTANCE) * math.cos(
        math.radians(ATMOSPHERE_CALIBRATION_ZENITH_DEG)
    )
    tau = tau_ref * (ATMOSPHERE_REFERENCE_WAVELENGTH / wavelength) ** exponent
    airmass = 1.0 / np.sin(np.radians(el))
    out = np.exp(-tau * airmass)
    return float(out) if out.ndim == 0 else out


def pointing_loss(jitter_sigma, half_angle_1e2):
    """Mean on-axis intensity loss [dB] under 2-axis Gaussian jitter.

    For I = exp(-2 theta^2 / w^2) and theta^2 = x^2 + y^2 with x, y ~ N(0, s^2),
    E[I] = 1 / (1 + 4 s^2 / w^2).
    """
    if jitter_sigma < 0:
        raise ModelInputError("jitter sigma must be non-negative")
    ratio = jitter_sigma / half_angle_1e2
    return -10.0 * math.log10(1.0 + 4.0 * ratio * ratio)


def capture_fraction(source, slant_range, receiver_diameter):
    """Fraction of the Gaussian far-field power landing in a centred circular aperture."""
    w = beam_half_angle_1e2(source) * 1e-6 * slant_range
    a = receiver_diameter / 2.0
    return -math.expm1(-2.0 * a * a / (w * w))


def link_budget(source, point, receiver_diameter=1.0, jitter_sigma=3.0, optics_efficiency=0.5):
    """Itemised loss ledger for the downlink seen at ``point`` (a TopoPoint)."""
    if not receiver_diameter > 0:
        raise ModelInputError("receiver diameter must be positive")
    if not 0.0 < optics_efficiency <= 1.0:
        raise ModelInputError("optics efficiency must lie in (0, 1]")
    rng = point.slant_range
    spot = ground_spot(source, rng)
    if spot <= receiver_diameter:
        geometric = 0.0
    else:
        geometric = min(10.0 * math.log10(capture_fraction(source, rng, receiver_diameter)), 0.0)
    pointing = pointing_loss(jitter_sigma, beam_half_angle_1e2(source))
    atmospheric = 10.0 * math.log10(atmospheric_transmittance(point.elevation, source.wavelength))
    optics = 10.0 * math.log10(optics_efficiency)
    total = geometric + pointing + atmospheric + optics
    return LinkBudget(geometric, pointing, atmospheric, optics, total, spot, rng)
