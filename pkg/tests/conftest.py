import math

import pytest

from eitlock.eit import CascadeSystem, QuadratureSpec
from eitlock.reference import DecayRates, LaserParams, VaporParams

TWO_PI = 2 * math.pi


@pytest.fixture()
def hot_system() -> CascadeSystem:
    """Room-temperature cell, counter-propagating 780/480 nm, moderate
    coupling. The workhorse configuration for scan tests."""
    return CascadeSystem(
        probe=LaserParams(wavelength=780e-9, power=4e-6,
                          residual_linewidth=1e5),
        coupling=LaserParams(wavelength=480e-9, power=0.5e-3),
        rates=DecayRates(gamma_e=TWO_PI * 6.07e6, gamma_r=TWO_PI * 1e4,
                         gamma_transit=TWO_PI * 4e4,
                         gamma_rel_laser=math.pi * 2.8e5),
        vapor=VaporParams(temperature=293.0, peak_optical_depth=1.5),
        omega_c=TWO_PI * 2.5e6)


@pytest.fixture()
def narrow_system() -> CascadeSystem:
    """Doppler width comparable to the natural width: the regime where the
    node-based quadratures are well conditioned."""
    return CascadeSystem(
        probe=LaserParams(wavelength=780e-9),
        coupling=LaserParams(wavelength=480e-9),
        rates=DecayRates(gamma_e=TWO_PI * 6.07e6,
                         gamma_rel_laser=TWO_PI * 1e6),
        vapor=VaporParams(temperature=0.057, peak_optical_depth=0.5),
        omega_c=TWO_PI * 3e6)


@pytest.fixture()
def cold_system() -> CascadeSystem:
    """Stationary-ensemble configuration for probe-scan spectra."""
    return CascadeSystem(
        probe=LaserParams(wavelength=780e-9, power=200e-9),
        coupling=LaserParams(wavelength=480e-9, power=84e-3),
        rates=DecayRates(gamma_e=TWO_PI * 6.07e6, gamma_r=TWO_PI * 1e4,
                         gamma_transit=TWO_PI * 4e4,
                         gamma_rel_laser=TWO_PI * 2.8e5),
        vapor=VaporParams(temperature=293.0, peak_optical_depth=1.0),
        omega_c=TWO_PI * 5e6)


@pytest.fixture()
def default_quad() -> QuadratureSpec:
    return QuadratureSpec()
