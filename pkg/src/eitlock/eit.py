"""Weak-probe response of the excitation ladder, single-velocity and thermal.

The probe-transition coherence of the three-level ladder gives a normalized
complex lineshape

    chi(v) = i*g1 / [ g1 - i*(dp - kp*v) + (Oc^2/4) / (g2 - i*(d2 + dk*v)) ]

with dp the probe detuning, d2 = dp + dc the two-photon detuning, Oc the
coupling Rabi frequency, g1 the probe-coherence decay, g2 the
two-photon-coherence decay, and dk the residual wavevector (kc - kp for
counter-propagating beams). The normalization anchor is chi = i for the
resonant two-level atom at rest: the imaginary part is absorption, bounded
below by zero, and equals one at that anchor.

As a function of velocity chi is a rational with two complex-conjugate-free
poles, so its average over the thermal (Gaussian) velocity distribution has
a closed form in the Faddeeva function. That exact evaluation is the default
"analytic" method; Gauss-Hermite and trapezoid quadratures of the same
integrand are provided for cross-checks and for narrow-Doppler regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite, wofz

from .errors import QuadratureConvergenceError
from .reference import (DecayRates, LaserParams, VaporParams,
                        doppler_sigma, thermal_velocity_sigma)

_SQRT2 = math.sqrt(2.0)
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class CascadeSystem:
    """Full physics configuration of the two-color ladder in one cell."""

    probe: LaserParams
    coupling: LaserParams
    rates: DecayRates
    vapor: VaporParams
    omega_c: float
    counter_propagating: bool = True

    def __post_init__(self):
        if self.omega_c < 0:
            raise ValueError("omega_c must be >= 0")

    @property
    def k_p(self) -> float:
        return self.probe.wavenumber

    @property
    def k_c(self) -> float:
        return self.coupling.wavenumber

    @property
    def delta_k(self) -> float:
        """Velocity coefficient of the two-photon detuning (rad/s per m/s)."""
        if self.counter_propagating:
            return self.k_c - self.k_p
        return -(self.k_c + self.k_p)

    @property
    def gamma_ge(self) -> float:
        """Probe-coherence decay: half the population decay plus the
        phase-diffusion dephasing pi*FWHM of the probe laser."""
        return 0.5 * self.rates.gamma_e + math.pi * self.probe.residual_linewidth

    @property
    def gamma_2(self) -> float:
        """Two-photon-coherence decay."""
        return (0.5 * self.rates.gamma_r + self.rates.gamma_transit
                + self.rates.gamma_rel_laser)

    @property
    def sigma_v(self) -> float:
        return thermal_velocity_sigma(self.vapor)

    @property
    def doppler_sigma_probe(self) -> float:
        return doppler_sigma(self.vapor, self.probe.wavelength)


@dataclass(frozen=True)
class QuadratureSpec:
    """How to average over the thermal velocity distribution.

    "analytic" is exact (node_count is ignored); the two quadrature methods
    sample the integrand at node_count points. velocity_cutoff bounds the
    trapezoid grid in units of the thermal sigma. When convergence_tol is
    set, quadrature results are re-evaluated at twice the node count and a
    disagreement above the tolerance raises QuadratureConvergenceError.
    """

    method: str = "analytic"
    node_count: int = 200
    velocity_cutoff: float = 6.0
    convergence_tol: float | None = None

    def __post_init__(self):
        if self.method not in ("analytic", "gauss_hermite", "trapezoid"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.node_count < 8:
            raise ValueError("node_count >= 8 required")
        if self.velocity_cutoff <= 0:
            raise ValueError("velocity_cutoff must be > 0")


def susceptibility_single_velocity(delta_p, delta_c, v, sys: CascadeSystem):
    """Normalized complex lineshape for one velocity class.

    Arguments broadcast; detunings in rad/s, velocity in m/s.
    """
    delta_p, delta_c, v = np.broadcast_arrays(
        np.asarray(delta_p, dtype=float), np.asarray(delta_c, dtype=float),
        np.asarray(v, dtype=float))
    dp = delta_p - sys.k_p * v
    d2 = (delta_p + delta_c) + sys.delta_k * v
    g1 = sys.gamma_ge
    g2 = sys.gamma_2
    w = 0.25 * sys.omega_c ** 2
    if w == 0.0:
        chi = 1j * g1 / (g1 - 1j * dp)
    else:
        den2 = g2 - 1j * d2
        dark = den2 == 0
        term = np.where(dark, 0.0, w / np.where(dark, 1.0, den2))
        chi = 1j * g1 / (g1 - 1j * dp + term)
        # exact two-photon resonance with no two-photon decay: fully dark
        chi = np.where(dark, 0.0 + 0.0j, chi)
    chi = np.asarray(chi, dtype=complex)
    if chi.ndim == 0:
        return complex(chi)
    return chi


def _pole_decomposition(delta_p, delta_c, sys: CascadeSystem):
    """Poles (in velocity) and residues of chi(v), vectorized.

    Returns (r1, c1, r2, c2, tiny, n0, n1, a2) with
    chi(v) = c1/(v-r1) + c2/(v-r2); `tiny` flags nearly degenerate root
    pairs, to be re-expanded around the double pole using the numerator
    coefficients n0 + n1*v and the leading denominator coefficient a2.
    When the two-photon term is velocity independent the second pole is
    a placeholder with zero residue.
    """
    g1 = sys.gamma_ge
    g2 = sys.gamma_2
    w = 0.25 * sys.omega_c ** 2
    kp = sys.k_p
    dk = sys.delta_k
    a_ = g1 - 1j * delta_p
    b_ = g2 - 1j * (delta_p + delta_c)
    if w == 0.0 or dk == 0.0:
        # single pole: chi = (g1/kp) / (v - r) with A_eff = A + W/B;
        # a vanishing B with the coupling on is fully dark (zero residue)
        if w == 0.0:
            a_eff = a_ + np.zeros_like(b_)
            dark = np.zeros(a_eff.shape, dtype=bool)
        else:
            dark = b_ == 0
            a_eff = a_ + w / np.where(dark, 1.0, b_)
        r = np.where(dark, 1j, 1j * a_eff / kp)
        c = np.where(dark, 0.0, g1 / kp + 0.0j)
        zero = np.zeros_like(r)
        placeholder = np.full_like(r, 1j)
        no_tiny = np.zeros(r.shape, dtype=bool)
        return r, c, placeholder, zero, no_tiny, zero, 0.0, 1.0

    a2 = kp * dk
    a1 = 1j * (kp * b_ - dk * a_)
    a0 = a_ * b_ + w
    disc = np.sqrt(a1 * a1 - 4.0 * a2 * a0)
    # pick the sign that avoids cancellation in a1 + disc
    flip = (a1.real * disc.real + a1.imag * disc.imag) < 0
    disc = np.where(flip, -disc, disc)
    q = -0.5 * (a1 + disc)
    r1 = q / a2
    r2 = np.where(q == 0, -r1, a0 / np.where(q == 0, 1.0, q))
    # numerator N(v) = i*g1*B + g1*dk*v
    n0 = 1j * g1 * b_
    n1 = g1 * dk
    sep = r1 - r2
    tiny = np.abs(sep) < 1e-12 * (np.abs(r1) + np.abs(r2) + sys.sigma_v)
    safe = np.where(tiny, 1.0, sep)
    c1 = (n0 + n1 * r1) / (a2 * safe)
    c2 = -(n0 + n1 * r2) / (a2 * safe)
    return r1, c1, r2, c2, tiny, n0, n1, a2


def _gaussian_pole_mean(poles, sigma_v):
    """integral f(v)/(v - p) dv for the unit-normalized Gaussian f."""
    zeta = np.asarray(poles) / (_SQRT2 * sigma_v)
    if np.any(zeta.imag == 0):
        raise ValueError("pole on the real velocity axis; zero damping "
                         "is outside the thermal-average domain")
    out = np.empty_like(zeta)
    up = zeta.imag > 0
    out[up] = 1j * math.pi * wofz(zeta[up])
    dn = ~up
    out[dn] = np.conj(1j * math.pi * wofz(np.conj(zeta[dn])))
    return out / (_SQRT2 * sigma_v * _SQRT_PI)


def _gaussian_pole_mean_deriv(poles, sigma_v):
    """integral f(v)/(v - p)^2 dv, i.e. d/dp of _gaussian_pole_mean."""
    zeta = np.asarray(poles) / (_SQRT2 * sigma_v)
    up = zeta.imag > 0
    z = np.where(up, zeta, np.conj(zeta))
    wz = wofz(z)
    dF = 1j * math.pi * (-2.0 * z * wz + 2j / _SQRT_PI)
    dF = np.where(up, dF, np.conj(dF))
    return dF / (2.0 * sigma_v ** 2 * _SQRT_PI)


def _doppler_analytic(delta_p, delta_c, sys: CascadeSystem):
    sigma_v = sys.sigma_v
    r1, c1, r2, c2, tiny, n0, n1, a2 = _pole_decomposition(delta_p, delta_c,
                                                           sys)
    chi = c1 * _gaussian_pole_mean(r1, sigma_v) \
        + c2 * _gaussian_pole_mean(r2, sigma_v)
    if np.any(tiny):
        # nearly degenerate roots: chi = n1/(a2 (v-r)) + (n0+n1 r)/(a2 (v-r)^2)
        r = np.where(tiny, 0.5 * (r1 + r2), 1j)
        double = (n1 / a2) * _gaussian_pole_mean(r, sigma_v) \
            + ((n0 + n1 * r) / a2) * _gaussian_pole_mean_deriv(r, sigma_v)
        chi = np.where(tiny, double, chi)
    return chi


def _doppler_quadrature(delta_p, delta_c, sys: CascadeSystem, method: str,
                        nodes: int, cutoff: float):
    sigma_v = sys.sigma_v
    if method == "gauss_hermite":
        x, wgt = roots_hermite(nodes)
        v = _SQRT2 * sigma_v * x
        wgt = wgt / _SQRT_PI
    else:
        v = np.linspace(-cutoff * sigma_v, cutoff * sigma_v, nodes)
        f = np.exp(-0.5 * (v / sigma_v) ** 2) / (sigma_v * math.sqrt(2 * math.pi))
        dv = v[1] - v[0]
        wgt = f * dv
        wgt[0] *= 0.5
        wgt[-1] *= 0.5
    out = np.empty(delta_p.shape, dtype=complex)
    flat_p = delta_p.reshape(-1)
    flat_c = delta_c.reshape(-1)
    flat_o = out.reshape(-1)
    chunk = max(1, int(2e6 // max(nodes, 1)))
    for i in range(0, flat_p.size, chunk):
        sl = slice(i, i + chunk)
        chi = susceptibility_single_velocity(
            flat_p[sl][:, None], flat_c[sl][:, None], v[None, :], sys)
        flat_o[sl] = chi @ wgt
    return out


def susceptibility_doppler(delta_p, delta_c, sys: CascadeSystem,
                           quad: QuadratureSpec = QuadratureSpec()):
    """Thermal average of the single-velocity lineshape.

    Deterministic for a fixed QuadratureSpec. Broadcasts over detunings.
    """
    delta_p, delta_c = np.broadcast_arrays(
        np.asarray(delta_p, dtype=float), np.asarray(delta_c, dtype=float))
    scalar = delta_p.ndim == 0
    delta_p = np.atleast_1d(delta_p)
    delta_c = np.atleast_1d(delta_c)
    if quad.method == "analytic":
        chi = _doppler_analytic(delta_p, delta_c, sys)
    else:
        chi = _doppler_quadrature(delta_p, delta_c, sys, quad.method,
                                  quad.node_count, quad.velocity_cutoff)
        if quad.convergence_tol is not None:
            fine = _doppler_quadrature(delta_p, delta_c, sys, quad.method,
                                       2 * quad.node_count, quad.velocity_cutoff)
            err = float(np.max(np.abs(fine - chi)))
            if err > quad.convergence_tol:
                raise QuadratureConvergenceError(
                    f"{quad.method} with {quad.node_count} nodes not converged: "
                    f"doubling nodes moved the result by {err:.3e} "
                    f"(tolerance {quad.convergence_tol:.3e})")
            chi = fine
    if scalar:
        return complex(chi[0])
    return chi


@lru_cache(maxsize=128)
def _od_scale(sys: CascadeSystem, quad: QuadratureSpec, doppler: bool) -> float:
    """Scale factor turning Im[chi] into optical depth.

    Anchored so that the resonant coupling-free cell attenuates intensity
    by exp(-peak_optical_depth).
    """
    od = sys.vapor.peak_optical_depth
    if od == 0.0:
        return 0.0
    bare = replace(sys, omega_c=0.0)
    if doppler:
        ref = susceptibility_doppler(0.0, 0.0, bare, quad).imag
    else:
        ref = susceptibility_single_velocity(0.0, 0.0, 0.0, bare).imag
    return od / ref


def field_transmission(delta_p, delta_c, sys: CascadeSystem,
                       quad: QuadratureSpec = QuadratureSpec(),
                       doppler: bool = True):
    """Complex field transmission t of the cell for the probe.

    |t|^2 is the intensity transmission; the phase is the dispersive shift.
    With doppler=False the atoms are taken at rest (cold ensemble) and
    peak_optical_depth is the resonant cold optical depth.
    """
    if doppler:
        chi = susceptibility_doppler(delta_p, delta_c, sys, quad)
    else:
        chi = susceptibility_single_velocity(delta_p, delta_c, 0.0, sys)
    scale = _od_scale(sys, quad, doppler)
    return np.exp((1j * np.real(chi) - np.imag(chi)) * (0.5 * scale))


def cold_spectrum(delta_p_grid, sys: CascadeSystem):
    """Intensity transmission of a stationary ensemble over a probe scan.

    The coupling detuning is the static detuning of the coupling laser.
    """
    t = field_transmission(np.asarray(delta_p_grid, dtype=float),
                           sys.coupling.static_detuning, sys, doppler=False)
    return np.abs(t) ** 2


def two_tier_grid(half_span: float, coarse_step: float, centers=(),
                  fine_halfwidth: float = 0.0, fine_step: float = 0.0):
    """Scan grid: a coarse global grid plus fine windows around expected
    features. Values are sorted and deduplicated."""
    if half_span <= 0 or coarse_step <= 0:
        raise ValueError("half_span and coarse_step must be > 0")
    n = int(round(2 * half_span / coarse_step)) + 1
    pieces = [np.linspace(-half_span, half_span, n)]
    min_step = coarse_step
    if fine_halfwidth > 0 and fine_step > 0:
        min_step = min(coarse_step, fine_step)
        m = int(round(2 * fine_halfwidth / fine_step)) + 1
        for c in centers:
            pieces.append(c + np.linspace(-fine_halfwidth, fine_halfwidth, m))
    grid = np.unique(np.concatenate(pieces))
    grid = grid[np.abs(grid) <= half_span * (1 + 1e-12)]
    # collapse near-coincident points from overlapping tiers; they would
    # otherwise defeat strict-monotonicity checks downstream
    keep = np.concatenate([[True], np.diff(grid) > 1e-6 * min_step])
    return grid[keep]
