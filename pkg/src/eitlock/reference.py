"""Atomic, laser and vapor-cell reference data for the two-color excitation ladder.

Internal convention: every rate and detuning is angular (rad/s), every length
is in meters. Conversion to interface units (MHz, nm, mW) happens once, in the
scenario layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import scipy.constants as const

TWO_PI = 2.0 * math.pi

# Literature defaults, overridable via configuration. These are reference
# values for rubidium, not fitted quantities; no test treats them as truth.
DEFAULT_GAMMA_E = TWO_PI * 6.07e6  # rad/s, intermediate-state decay
DEFAULT_QUANTUM_DEFECT_S = 3.13
DEFAULT_QUANTUM_DEFECT_D = 1.35
RB87_MASS_U = 86.909180520


class Series(str, Enum):
    """Angular-momentum series of the upper state."""

    S = "S"
    D = "D"


@dataclass(frozen=True)
class LaserParams:
    """One laser of the ladder.

    wavelength: m. power: W. waist_radius: m (1/e^2 intensity radius).
    residual_linewidth: Hz, FWHM of the pre-stabilized source.
    static_detuning: rad/s offset from line center.
    """

    wavelength: float
    power: float = 0.0
    waist_radius: float = 1e-3
    residual_linewidth: float = 0.0
    static_detuning: float = 0.0

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if self.waist_radius <= 0:
            raise ValueError("waist_radius must be > 0")
        if self.residual_linewidth < 0:
            raise ValueError("residual_linewidth must be >= 0")

    @property
    def wavenumber(self) -> float:
        """Angular wavenumber k = 2*pi/lambda in rad/m."""
        return TWO_PI / self.wavelength


@dataclass(frozen=True)
class DecayRates:
    """Population and dephasing rates, all angular (rad/s), all >= 0.

    gamma_e: intermediate-state population decay.
    gamma_r: upper-state population decay.
    gamma_transit: dephasing from atoms crossing the beam.
    gamma_rel_laser: two-photon dephasing from the combined (relative)
        phase noise of the two lasers.
    """

    gamma_e: float = DEFAULT_GAMMA_E
    gamma_r: float = 0.0
    gamma_transit: float = 0.0
    gamma_rel_laser: float = 0.0

    def __post_init__(self):
        for name in ("gamma_e", "gamma_r", "gamma_transit", "gamma_rel_laser"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class RydbergLevel:
    """Upper state of the ladder, labeled by principal quantum number and series."""

    n: int
    series: Series = Series.D
    quantum_defect: float = DEFAULT_QUANTUM_DEFECT_D

    def __post_init__(self):
        if self.n < 5:
            raise ValueError("n must be >= 5")
        if not 0 <= self.quantum_defect < self.n:
            raise ValueError("quantum_defect must satisfy 0 <= defect < n")


@dataclass(frozen=True)
class VaporParams:
    """Thermal-cell parameters.

    peak_optical_depth is the resonant two-level Doppler-broadened optical
    depth of the cell; density never enters explicitly.
    """

    temperature: float = 293.0
    atomic_mass: float = RB87_MASS_U * const.atomic_mass
    cell_length: float = 75e-3
    peak_optical_depth: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.atomic_mass <= 0:
            raise ValueError("atomic_mass must be > 0")
        if self.cell_length <= 0:
            raise ValueError("cell_length must be > 0")
        if self.peak_optical_depth < 0:
            raise ValueError("peak_optical_depth must be >= 0")


@dataclass(frozen=True)
class CouplingCalibration:
    """Measured anchor for the upper-leg Rabi frequency.

    omega_c_ref is the Rabi frequency (rad/s) obtained at power_ref and
    waist_ref on a state with effective quantum number n_star_ref of
    series_ref. s_amplitude_ratio is the S:D amplitude ratio applied when
    mapping a D-series calibration onto an S state (line-strength ratio
    of 10 gives sqrt(1/10) on the amplitude).
    """

    omega_c_ref: float
    n_star_ref: float
    series_ref: Series = Series.D
    power_ref: float = 0.5e-3
    waist_ref: float = 1e-3
    s_amplitude_ratio: float = 10.0 ** -0.5

    def __post_init__(self):
        for name in ("omega_c_ref", "n_star_ref", "power_ref", "waist_ref",
                     "s_amplitude_ratio"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


def effective_quantum_number(level: RydbergLevel) -> float:
    """n* = n - quantum_defect."""
    return level.n - level.quantum_defect


def coupling_rabi_frequency(laser: LaserParams, level: RydbergLevel,
                            reference: CouplingCalibration) -> float:
    """Scale the calibrated Rabi frequency to a new power, waist and state.

    Amplitude scales as sqrt(power), as 1/waist (peak field of a Gaussian
    beam), and as n*^(-3/2) (dipole matrix element of the upper leg). A
    series change relative to the calibration applies s_amplitude_ratio.
    """
    n_star = effective_quantum_number(level)
    scale = math.sqrt(laser.power / reference.power_ref)
    scale *= reference.waist_ref / laser.waist_radius
    scale *= (reference.n_star_ref / n_star) ** 1.5
    if level.series != reference.series_ref:
        if level.series == Series.S:
            scale *= reference.s_amplitude_ratio
        else:
            scale /= reference.s_amplitude_ratio
    return reference.omega_c_ref * scale


def doppler_sigma(vapor: VaporParams, wavelength: float) -> float:
    """1-sigma Doppler width (rad/s) of the one-photon detuning: k*sqrt(kB*T/m)."""
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    k = TWO_PI / wavelength
    return k * math.sqrt(const.k * vapor.temperature / vapor.atomic_mass)


def thermal_velocity_sigma(vapor: VaporParams) -> float:
    """1-sigma width (m/s) of the one-dimensional thermal velocity distribution."""
    return math.sqrt(const.k * vapor.temperature / vapor.atomic_mass)
