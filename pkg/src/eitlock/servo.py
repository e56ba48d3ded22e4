"""Discrete-time simulation of the coupling laser locked to the error signal.

Topology per sample (period T = 1/fs):

    error e[k] = free-run frequency + initial offset - correction[k-1]
    volts v[k] = discriminant(e[k]) + detector noise
    fast branch: proportional + integrator, then first-order low-pass
    slow branch: pure integrator with clamped output
    correction[k] = sign * (fast + slow) * (1 Hz/V actuator)

All loop filters are bilinear (trapezoidal) discretizations, so the linear
closed-loop prediction uses exactly the same coefficients as the time-domain
recursion. The actuator gain is fixed at 1 Hz/V; physical actuator gain folds
into the branch gains.

Noise conventions: white_psd is the one-sided frequency-noise PSD S0 in
Hz^2/Hz (per-sample variance S0*fs/2), which makes the free-running line
Lorentzian with FWHM = pi*S0. random_walk_coeff K gives a one-sided PSD
K/f^2 (per-sample increment variance 2*pi^2*K/fs). Per-stream generators
derive from the model seed by SeedSequence spawn keys: 0 = free-run noise,
1 = detector noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import MemoryBudgetError, WrongSignError
from .fmlock import ErrorSignalTrace, zero_crossing_slope

TWO_PI = 2.0 * math.pi
DEFAULT_SAMPLE_BUDGET = 50_000_000


@dataclass(frozen=True)
class NoiseModel:
    """Free-running frequency noise of the laser under lock."""

    white_psd: float = 0.0          # Hz^2/Hz, one-sided
    random_walk_coeff: float = 0.0  # Hz^3: one-sided PSD K/f^2
    seed: int = 0

    def __post_init__(self):
        if self.white_psd < 0 or self.random_walk_coeff < 0:
            raise ValueError("noise coefficients must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class FastBranch:
    """Current-like branch: P+I shaped, band-limited by a low-pass."""

    proportional_gain: float = 1e8   # V/V
    integrator_corner: float = 1e6   # Hz
    cutoff: float = 1e6              # Hz

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be > 0")
        for name in ("proportional_gain", "integrator_corner"):
            if not math.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise ValueError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class SlowBranch:
    """Piezo-like branch: pure integrator with a clamped output range."""

    integrator_gain: float = 50.0    # 1/s
    output_range: float = 5e6        # Hz

    def __post_init__(self):
        if not math.isfinite(self.integrator_gain) or self.integrator_gain < 0:
            raise ValueError("integrator_gain must be finite and >= 0")
        if self.output_range <= 0:
            raise ValueError("output_range must be > 0")


@dataclass(frozen=True)
class ControllerConfig:
    fast: FastBranch = FastBranch()
    slow: SlowBranch = SlowBranch()
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")


@dataclass(frozen=True)
class Discriminant:
    """Error-signal transducer seen by the servo.

    shape_hz/shape_volts sample the full saturating curve (lookups clamp to
    the end values); slope is the linear coefficient at the crossing in
    V/Hz; detector_noise_rms is additive white voltage noise per sample.
    """

    slope: float
    shape_hz: np.ndarray
    shape_volts: np.ndarray
    detector_noise_rms: float = 0.0
    capture_range: float = 0.0  # Hz

    def __post_init__(self):
        if self.slope == 0:
            raise ValueError("slope must be nonzero")
        if self.detector_noise_rms < 0:
            raise ValueError("detector_noise_rms must be >= 0")
        x = np.asarray(self.shape_hz, dtype=float)
        y = np.asarray(self.shape_volts, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("shape must be two matching 1-d arrays")
        if not np.all(np.diff(x) > 0):
            raise ValueError("shape_hz must be strictly increasing")
        if not (x[0] < 0 < x[-1]):
            raise ValueError("shape must contain the crossing")
        object.__setattr__(self, "shape_hz", x)
        object.__setattr__(self, "shape_volts", y)
        if self.capture_range <= 0:
            object.__setattr__(self, "capture_range",
                               float(min(-x[0], x[-1])))

    @classmethod
    def linear(cls, slope: float, span: float,
               detector_noise_rms: float = 0.0) -> "Discriminant":
        """Ideal linear discriminant over +/- span Hz, clamped beyond."""
        x = np.array([-span, span])
        return cls(slope=slope, shape_hz=x, shape_volts=slope * x,
                   detector_noise_rms=detector_noise_rms, capture_range=span)

    @classmethod
    def from_trace(cls, trace: ErrorSignalTrace, window: float,
                   detector_noise_rms: float = 0.0) -> "Discriminant":
        """Build from a scanned error signal around its carrier crossing.

        The trace axis is angular (rad/s); the servo works in Hz.
        """
        report = zero_crossing_slope(trace, window)
        x_hz = (trace.detunings - report.crossing) / TWO_PI
        return cls(slope=report.slope * TWO_PI, shape_hz=x_hz,
                   shape_volts=trace.volts.copy(),
                   detector_noise_rms=detector_noise_rms,
                   capture_range=report.capture_range / (2 * TWO_PI))


@dataclass(frozen=True)
class FrequencyTimeSeries:
    """Uniformly sampled instantaneous frequency offset (Hz)."""

    samples: np.ndarray
    sample_rate: float
    seed_lineage: tuple = ()

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("samples must be 1-d")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


@dataclass(frozen=True)
class LockResult:
    """Outcome of a closed-loop run. Arrays are not mutated after creation."""

    error: FrequencyTimeSeries
    control: FrequencyTimeSeries
    volts: np.ndarray
    monitor_volts: np.ndarray
    unlock_events: list = field(default_factory=list)

    @property
    def locked(self) -> bool:
        return not self.unlock_events


def _free_run_samples(noise: NoiseModel, sample_rate: float, n: int):
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=noise.seed, spawn_key=(0,)))
    out = np.zeros(n)
    if noise.white_psd > 0:
        out += rng.normal(0.0, math.sqrt(noise.white_psd * sample_rate / 2), n)
    if noise.random_walk_coeff > 0:
        step = math.sqrt(2 * math.pi ** 2 * noise.random_walk_coeff / sample_rate)
        out += np.cumsum(rng.normal(0.0, step, n))
    return out


def simulate_free_run(noise: NoiseModel, sample_rate: float, duration: float,
                      max_samples: int = DEFAULT_SAMPLE_BUDGET
                      ) -> FrequencyTimeSeries:
    """Free-running laser frequency: white noise plus frequency random walk."""
    n = int(round(duration * sample_rate))
    if n > max_samples:
        raise MemoryBudgetError(
            f"{n} samples exceed the budget of {max_samples}")
    return FrequencyTimeSeries(_free_run_samples(noise, sample_rate, n),
                               sample_rate, seed_lineage=(noise.seed, 0))


def _lookup_table(disc: Discriminant, points: int = 4097):
    """Uniform resample of the shape, anchored so the output vanishes at
    zero error (the crossing defines the lock point)."""
    x = np.linspace(disc.shape_hz[0], disc.shape_hz[-1], points)
    y = np.interp(x, disc.shape_hz, disc.shape_volts)
    y -= np.interp(0.0, disc.shape_hz, disc.shape_volts)
    return float(x[0]), float(x[1] - x[0]), y.tolist()


def check_loop_sign(controller: ControllerConfig, disc: Discriminant) -> float:
    """Probe the discriminant slope numerically; raise on a runaway sign."""
    h = 0.01 * disc.capture_range
    x0, dx, table = _lookup_table(disc)
    npts = len(table)

    def lut(e):
        pos = (e - x0) / dx
        if pos <= 0:
            return table[0]
        if pos >= npts - 1:
            return table[-1]
        idx = int(pos)
        frac = pos - idx
        return table[idx] * (1 - frac) + table[idx + 1] * frac

    slope_num = (lut(h) - lut(-h)) / (2 * h)
    if controller.sign * slope_num <= 0:
        raise WrongSignError(
            f"discriminant slope {slope_num:.3e} V/Hz with loop sign "
            f"{controller.sign:+d} pushes away from lock")
    return slope_num


def simulate_locked(noise: NoiseModel, controller: ControllerConfig,
                    disc: Discriminant, sample_rate: float, duration: float,
                    initial_offset: float = 0.0,
                    monitor_bandwidth: float | None = 1e5,
                    unlock_dwell: float = 1e-3,
                    max_samples: int = DEFAULT_SAMPLE_BUDGET) -> LockResult:
    """Run the closed loop over the free-running noise realization.

    Unlock events (error beyond the capture range for longer than
    unlock_dwell) are reported in the result, not raised.
    """
    if sample_rate < 10 * controller.fast.cutoff:
        raise ValueError("sample_rate must be at least 10x the fast-branch "
                         "cutoff")
    n = int(round(duration * sample_rate))
    if n > max_samples:
        raise MemoryBudgetError(
            f"{n} samples exceed the budget of {max_samples}")
    check_loop_sign(controller, disc)

    nu = _free_run_samples(noise, sample_rate, n)
    if disc.detector_noise_rms > 0:
        det_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=noise.seed, spawn_key=(1,)))
        det = det_rng.normal(0.0, disc.detector_noise_rms, n).tolist()
    else:
        det = None

    T = 1.0 / sample_rate
    kp = controller.fast.proportional_gain
    wi_half_t = TWO_PI * controller.fast.integrator_corner * T / 2
    wct = TWO_PI * controller.fast.cutoff * T
    lp_a = (2 - wct) / (2 + wct)
    lp_b = wct / (2 + wct)
    gs_half_t = controller.slow.integrator_gain * T / 2
    clamp = controller.slow.output_range
    sign = float(controller.sign)
    x0, dx, table = _lookup_table(disc)
    npts = len(table)
    cap = disc.capture_range
    dwell_samples = max(1, int(round(unlock_dwell * sample_rate)))

    err = np.empty(n)
    ctrl = np.empty(n)
    volts = np.empty(n)
    nu_list = nu.tolist()

    corr = 0.0
    x_prev = 0.0
    u_prev = 0.0
    y_prev = 0.0
    integ = 0.0
    slow = 0.0
    run_start = -1
    events = []
    for k in range(n):
        e = nu_list[k] + initial_offset - corr
        if e == 0.0:
            v = 0.0  # the anchored table vanishes at the lock point
        else:
            pos = (e - x0) / dx
            if pos <= 0.0:
                v = table[0]
            elif pos >= npts - 1:
                v = table[-1]
            else:
                idx = int(pos)
                frac = pos - idx
                v = table[idx] * (1.0 - frac) + table[idx + 1] * frac
        if det is not None:
            v += det[k]
        x = sign * v
        integ += wi_half_t * (x + x_prev)
        u = kp * (x + integ)
        y = lp_a * y_prev + lp_b * (u + u_prev)
        slow += gs_half_t * (x + x_prev)
        if slow > clamp:
            slow = clamp
        elif slow < -clamp:
            slow = -clamp
        corr = y + slow
        err[k] = e
        ctrl[k] = corr
        volts[k] = v
        x_prev = x
        u_prev = u
        y_prev = y
        # unlock bookkeeping
        if e > cap or e < -cap:
            if run_start < 0:
                run_start = k
        elif run_start >= 0:
            if k - run_start >= dwell_samples:
                events.append((run_start * T, (k - run_start) * T))
            run_start = -1
    if run_start >= 0 and n - run_start >= dwell_samples:
        events.append((run_start * T, (n - run_start) * T))

    if monitor_bandwidth is not None and monitor_bandwidth < sample_rate / 2:
        b, a = sps.butter(2, monitor_bandwidth / (sample_rate / 2))
        monitor = sps.lfilter(b, a, volts)
    else:
        monitor = volts.copy()

    lineage = (noise.seed, 0, 1)
    return LockResult(
        error=FrequencyTimeSeries(err, sample_rate, lineage),
        control=FrequencyTimeSeries(ctrl, sample_rate, lineage),
        volts=volts, monitor_volts=monitor, unlock_events=events)


def _controller_response(controller: ControllerConfig, z, sample_rate: float):
    T = 1.0 / sample_rate
    h_int = (T / 2) * (z + 1) / (z - 1)
    h_pi = controller.fast.proportional_gain * (
        1 + TWO_PI * controller.fast.integrator_corner * h_int)
    wct = TWO_PI * controller.fast.cutoff * T
    h_lp = wct * (z + 1) / ((2 + wct) * z - (2 - wct))
    h_slow = controller.slow.integrator_gain * h_int
    return h_pi * h_lp + h_slow


def open_loop_transfer(controller: ControllerConfig, disc: Discriminant,
                       f, sample_rate: float):
    """Open-loop gain G(f) of the discretized slope-controller-delay path."""
    f = np.asarray(f, dtype=float)
    z = np.exp(2j * math.pi * f / sample_rate)
    return controller.sign * disc.slope * _controller_response(
        controller, z, sample_rate) / z


def free_run_psd(noise: NoiseModel, f, sample_rate: float):
    """One-sided PSD (Hz^2/Hz) of the sampled free-running frequency noise."""
    f = np.asarray(f, dtype=float)
    psd = np.full(f.shape, noise.white_psd)
    if noise.random_walk_coeff > 0:
        step_var = 2 * math.pi ** 2 * noise.random_walk_coeff / sample_rate
        denom = 4 * np.sin(math.pi * f / sample_rate) ** 2
        psd = psd + np.where(denom > 0, 2 * step_var / sample_rate / denom,
                             np.inf)
    return psd


def closed_loop_psd_prediction(noise: NoiseModel, controller: ControllerConfig,
                               disc: Discriminant, f, sample_rate: float):
    """Linear prediction of the locked error PSD: |1/(1+G)|^2 * S_nu."""
    g = open_loop_transfer(controller, disc, f, sample_rate)
    sens = 1.0 / np.abs(1.0 + g) ** 2
    return sens * free_run_psd(noise, f, sample_rate)


def loop_poles(controller: ControllerConfig, disc: Discriminant,
               sample_rate: float):
    """Closed-loop poles in z of the linearized loop."""
    T = 1.0 / sample_rate
    kp = controller.fast.proportional_gain
    wit = TWO_PI * controller.fast.integrator_corner * T
    wct = TWO_PI * controller.fast.cutoff * T
    gs = controller.slow.integrator_gain
    g0 = controller.sign * disc.slope
    dl = np.array([2 + wct, -(2 - wct)])
    npi = np.array([1 + wit / 2, -(1 - wit / 2)])
    t1 = np.convolve(np.array([1.0, 0.0]),
                     np.convolve(np.array([1.0, -1.0]), dl))
    t2 = kp * wct * np.convolve(npi, np.array([1.0, 1.0]))
    t3 = gs * (T / 2) * np.convolve(np.array([1.0, 1.0]), dl)
    deg = max(t1.size, t2.size, t3.size)

    def pad(p):
        return np.concatenate([np.zeros(deg - p.size), p])

    char = pad(t1) + g0 * (pad(t2) + pad(t3))
    return np.roots(char)


def loop_is_stable(controller: ControllerConfig, disc: Discriminant,
                   sample_rate: float, margin: float = 0.0) -> bool:
    return bool(np.all(np.abs(loop_poles(controller, disc, sample_rate))
                       < 1.0 - margin))
