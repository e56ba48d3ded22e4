"""Phase-modulated probe detection: beat amplitude, demodulation, error signals.

The probe carries first-order phase-modulation sidebands at +/- omega_m. After
the cell each spectral component sees its own complex transmission, and the
photocurrent component at omega_m is

    B = J0(beta) * J1(beta) * [ t(+) t(0)* - t(0) t(-)* ]

with t(k) the field transmission at probe detuning delta_p0 + k*omega_m. A
flat transmission cancels B exactly (pure phase modulation carries no
intensity beat). Phase-sensitive detection projects B onto a reference phase.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0, j1

from .eit import CascadeSystem, QuadratureSpec, field_transmission
from .errors import AmbiguousCrossingError, NoCrossingError


@dataclass(frozen=True)
class FmParams:
    """Detection-chain parameters.

    omega_m: modulation frequency (rad/s). beta: modulation index, limited
    to the first-order-sideband regime. theta: demodulation phase (rad).
    electronic_gain: volts per unit beat amplitude. detector_rolloff:
    scalar response of the photodetector at omega_m.
    """

    omega_m: float
    beta: float = 0.3
    theta: float = 0.0
    electronic_gain: float = 1.0
    detector_rolloff: float = 1.0

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ValueError("omega_m must be > 0")
        if not 0 < self.beta <= 0.5:
            raise ValueError("beta must be in (0, 0.5] for the first-order "
                             "sideband treatment")
        if self.electronic_gain <= 0:
            raise ValueError("electronic_gain must be > 0")
        if not 0 < self.detector_rolloff <= 1:
            raise ValueError("detector_rolloff must be in (0, 1]")


@dataclass(frozen=True)
class ErrorSignalTrace:
    """Demodulated signal sampled over a coupling-detuning grid (rad/s, V)."""

    detunings: np.ndarray
    volts: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        v = np.asarray(self.volts, dtype=float)
        if d.ndim != 1 or d.shape != v.shape:
            raise ValueError("detunings and volts must be matching 1-d arrays")
        if d.size >= 2 and not np.all(np.diff(d) > 0):
            raise ValueError("detuning grid must be strictly increasing")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(v))):
            raise ValueError("trace must be finite")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "volts", v)


def fm_beat_amplitude(delta_p0, delta_c, sys: CascadeSystem, fm: FmParams,
                      quad: QuadratureSpec = QuadratureSpec(),
                      doppler: bool = True):
    """Complex photocurrent component at omega_m (per unit optical power)."""
    t_plus = field_transmission(delta_p0 + fm.omega_m, delta_c, sys, quad, doppler)
    t_zero = field_transmission(delta_p0, delta_c, sys, quad, doppler)
    t_minus = field_transmission(delta_p0 - fm.omega_m, delta_c, sys, quad, doppler)
    bessel = j0(fm.beta) * j1(fm.beta)
    return fm.detector_rolloff * bessel * (
        t_plus * np.conj(t_zero) - t_zero * np.conj(t_minus))


def dc_transmission(delta_p0, delta_c, sys: CascadeSystem, fm: FmParams,
                    quad: QuadratureSpec = QuadratureSpec(),
                    doppler: bool = True):
    """DC photodetector signal of the modulated probe (carrier + sidebands)."""
    t_plus = field_transmission(delta_p0 + fm.omega_m, delta_c, sys, quad, doppler)
    t_zero = field_transmission(delta_p0, delta_c, sys, quad, doppler)
    t_minus = field_transmission(delta_p0 - fm.omega_m, delta_c, sys, quad, doppler)
    return (j0(fm.beta) ** 2 * np.abs(t_zero) ** 2
            + j1(fm.beta) ** 2 * (np.abs(t_plus) ** 2 + np.abs(t_minus) ** 2))


def demodulate(B, fm: FmParams):
    """Phase-sensitive detection: volts = gain * Re[B * exp(-i*theta)]."""
    return fm.electronic_gain * np.real(B * np.exp(-1j * fm.theta))


def dispersive_phase(sys: CascadeSystem, fm: FmParams,
                     quad: QuadratureSpec = QuadratureSpec(),
                     delta_p0: float = 0.0, step: float | None = None) -> float:
    """Demodulation phase maximizing the carrier zero-crossing slope.

    The beat amplitude is odd in the coupling detuning at the carrier
    crossing, so theta* = arg(dB/d delta_c) both maximizes the slope and
    makes it positive (volts increase with coupling frequency).
    """
    if step is None:
        step = 0.02 * (sys.gamma_2 + sys.gamma_ge)
    b_plus = fm_beat_amplitude(delta_p0, step, sys, fm, quad)
    b_minus = fm_beat_amplitude(delta_p0, -step, sys, fm, quad)
    slope = (b_plus - b_minus) / (2 * step)
    return float(np.angle(slope))


def system_digest(sys: CascadeSystem) -> str:
    """Short content hash of the physics configuration, for trace metadata."""
    return hashlib.sha256(repr(sys).encode("utf-8")).hexdigest()[:16]


def expected_feature_offsets(sys: CascadeSystem, fm: FmParams):
    """Coupling detunings of the carrier and sideband features.

    The one-photon-resonant velocity class maps a probe offset d onto a
    coupling offset -(k_c/k_p)*d, so the sidebands appear at
    -/+ (lambda_p/lambda_c)*omega_m around the carrier feature.
    """
    ratio = sys.k_c / sys.k_p
    return np.array([-ratio * fm.omega_m, 0.0, ratio * fm.omega_m])


def expected_feature_width(sys: CascadeSystem) -> float:
    """Rough width (rad/s) of the narrowest error-signal feature."""
    power_broadening = 0.0
    if sys.gamma_ge > 0:
        power_broadening = 0.25 * sys.omega_c ** 2 / sys.gamma_ge
    return (sys.k_c / sys.k_p) * 2.0 * (sys.gamma_2 + power_broadening)


def error_signal_scan(delta_c_grid, sys: CascadeSystem, fm: FmParams,
                      quad: QuadratureSpec = QuadratureSpec(),
                      delta_p0: float = 0.0) -> ErrorSignalTrace:
    """Demodulated error signal over a coupling scan, probe carrier locked."""
    grid = np.asarray(delta_c_grid, dtype=float)
    width = expected_feature_width(sys)
    if grid.size >= 2 and width > 0:
        step = float(np.min(np.diff(grid)))
        if step > width / 10:
            warnings.warn(
                f"grid step {step:.3e} rad/s exceeds one tenth of the "
                f"narrowest expected feature width {width:.3e} rad/s",
                stacklevel=2)
    b = fm_beat_amplitude(delta_p0, grid, sys, fm, quad)
    volts = demodulate(b, fm)
    meta = {
        "omega_m": fm.omega_m, "beta": fm.beta, "theta": fm.theta,
        "electronic_gain": fm.electronic_gain, "delta_p0": delta_p0,
        "system_digest": system_digest(sys),
        "sign_convention": "positive slope = increasing coupling frequency "
                           "gives increasing volts",
    }
    return ErrorSignalTrace(grid, np.asarray(volts, dtype=float), meta)


@dataclass(frozen=True)
class CrossingReport:
    """Zero crossing of a dispersive feature."""

    crossing: float       # rad/s
    slope: float          # V per rad/s
    capture_range: float  # rad/s between the flanking extrema


def _crossing_brackets(sw):
    """Index pairs (a, b) bracketing exactly one sign change each.

    Exact zeros between opposite-signed neighbors count as crossings;
    leading/trailing zeros do not.
    """
    sgn = np.sign(sw)
    nz = np.nonzero(sgn)[0]
    return [(int(a), int(b)) for a, b in zip(nz[:-1], nz[1:])
            if sgn[a] * sgn[b] < 0]


def zero_crossing_slope(trace: ErrorSignalTrace, window: float,
                        center: float = 0.0) -> CrossingReport:
    """Locate the sign change within |detuning - center| <= window and
    measure the discriminant there.

    The crossing is found by bisection on the linear interpolant. The slope
    is a least-squares line through the points between the flanking extrema
    whose signal lies within the central quarter of the peak-to-peak extent;
    the capture range is the distance between those extrema.
    """
    d = trace.detunings
    s = trace.volts
    mask = np.abs(d - center) <= window
    if mask.sum() < 3:
        raise NoCrossingError("window contains fewer than 3 samples")
    dw = d[mask]
    sw = s[mask]
    brackets = _crossing_brackets(sw)
    if not brackets:
        raise NoCrossingError("no sign change inside the window")
    if len(brackets) > 1:
        raise AmbiguousCrossingError(
            f"{len(brackets)} sign changes inside the window")
    i, j = brackets[0]

    lo, hi = dw[i], dw[j]
    f_lo = sw[i]
    tol = max(1e-6 * (hi - lo), 1e-30)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = float(np.interp(mid, dw, sw))
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    crossing = 0.5 * (lo + hi)

    # flanking extrema: largest |signal| on each side of the crossing
    left = sw[: i + 1]
    right = sw[j:]
    i_left = int(np.argmax(np.abs(left)))
    i_right = j + int(np.argmax(np.abs(right)))
    x_left, x_right = dw[i_left], dw[i_right]
    peak_to_peak = abs(sw[i_right] - sw[i_left])
    if peak_to_peak == 0:
        raise NoCrossingError("flat trace around the crossing")
    capture_range = abs(x_right - x_left)

    core = (dw >= min(x_left, x_right)) & (dw <= max(x_left, x_right)) \
        & (np.abs(sw) <= peak_to_peak / 8)
    if core.sum() >= 2:
        slope = float(np.polyfit(dw[core], sw[core], 1)[0])
    else:
        slope = (sw[j] - sw[i]) / (dw[j] - dw[i])
    return CrossingReport(crossing=float(crossing), slope=slope,
                          capture_range=float(capture_range))


def find_crossings(trace: ErrorSignalTrace, min_slope_fraction: float = 0.1,
                   window: float | None = None):
    """All dispersive zero crossings with at least the given fraction of the
    steepest local slope. Returns a list of CrossingReport."""
    d = trace.detunings
    s = trace.volts
    brackets = _crossing_brackets(s)
    if not brackets:
        return []
    local = np.array([abs((s[b] - s[a]) / (d[b] - d[a])) for a, b in brackets])
    keep = [br for br, sl in zip(brackets, local)
            if sl >= min_slope_fraction * local.max()]
    if window is None:
        window = 0.3 * (d[-1] - d[0]) / max(len(keep), 1)
    reports = []
    for a, b in keep:
        c0 = 0.5 * (d[a] + d[b])
        try:
            reports.append(zero_crossing_slope(trace, window, center=c0))
        except AmbiguousCrossingError:
            half = window
            while half > 0:
                half /= 2
                try:
                    reports.append(zero_crossing_slope(trace, half, center=c0))
                    break
                except AmbiguousCrossingError:
                    continue
                except NoCrossingError:
                    break
    return reports
