"""Scenario configuration: schema, validation, units, seeds and digests.

The configuration file is a single YAML document. Interface units are MHz
for rates/detunings/frequencies, nm for wavelengths, mm for beam sizes and
powers with an explicit suffix ("0.5 mW", "4 uW", "200 nW"); bare numbers
are watts. Everything is converted to internal units (rad/s, m, W) exactly
once, in the build_* functions below.

Unknown keys are rejected and all violations are reported together. The
effective configuration (defaults applied) re-serializes to the same
content digest, which together with the seed pins every output bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import (BaseModel, ConfigDict, Field, ValidationError,
                      field_validator, model_validator)

from . import __version__
from .eit import CascadeSystem, QuadratureSpec
from .errors import ConfigError
from .fmlock import FmParams, dispersive_phase
from .reference import (DEFAULT_QUANTUM_DEFECT_D, DEFAULT_QUANTUM_DEFECT_S,
                        CouplingCalibration, DecayRates, LaserParams,
                        RydbergLevel, Series, VaporParams,
                        coupling_rabi_frequency)
from .servo import ControllerConfig, FastBranch, NoiseModel, SlowBranch

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # rad/s per MHz
ATOMIC_MASS_KG = 1.66053906660e-27

# named per-module random streams, derived from the root seed with
# SeedSequence(root, spawn_key=(index,)); indices are append-only so adding
# a stream never perturbs existing ones
SEED_STREAMS = {
    "lock": 0,
    "beat_a": 1,
    "beat_b": 2,
    "fit_noise": 3,
}

_POWER_UNITS = {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "µw": 1e-6, "nw": 1e-9}
_POWER_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-zA-Zµ]+)\s*$")


def parse_power(value: Union[float, int, str]) -> float:
    """Power in watts from a number (W) or a suffixed string ("0.5 mW")."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _POWER_RE.match(value)
    if not m:
        raise ValueError(f"cannot parse power {value!r}; use e.g. '0.5 mW'")
    unit = m.group(2).lower()
    if unit not in _POWER_UNITS:
        raise ValueError(f"unknown power unit {m.group(2)!r}; "
                         f"use one of W, mW, uW, nW")
    return float(m.group(1)) * _POWER_UNITS[unit]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class LaserConfig(_Section):
    wavelength_nm: float = Field(gt=0)
    power: Union[float, str] = 0.0
    waist_radius_mm: float = Field(default=0.8, gt=0)
    residual_linewidth_mhz: float = Field(default=0.0, ge=0)
    static_detuning_mhz: float = 0.0

    @field_validator("power")
    @classmethod
    def _power_valid(cls, v):
        watts = parse_power(v)
        if watts < 0:
            raise ValueError("power must be >= 0")
        return v

    @property
    def power_w(self) -> float:
        return parse_power(self.power)


class RatesConfig(_Section):
    """Decay and dephasing inputs. *_mhz values are rates over 2*pi; the
    linewidth entry is a FWHM and maps to a dephasing of pi*FWHM."""

    gamma_e_mhz: float = Field(default=6.07, ge=0)
    gamma_r_mhz: float = Field(default=0.01, ge=0)
    transit_mhz: float = Field(default=0.04, ge=0)
    rel_laser_linewidth_mhz: float = Field(default=0.28, ge=0)


class VaporConfig(_Section):
    temperature_k: float = Field(default=293.0, gt=0)
    atomic_mass_u: float = Field(default=86.909180520, gt=0)
    cell_length_mm: float = Field(default=75.0, gt=0)
    peak_optical_depth: float = Field(default=1.5, ge=0)


class RydbergConfig(_Section):
    n: int = Field(ge=5)
    series: Literal["S", "D"] = "D"
    quantum_defect: Optional[float] = None

    @model_validator(mode="after")
    def _defect_range(self):
        if self.quantum_defect is not None:
            if not 0 <= self.quantum_defect < self.n:
                raise ValueError("quantum_defect must satisfy 0 <= defect < n")
        return self


class CalibrationConfig(_Section):
    omega_c_ref_mhz: float = Field(default=2.5, gt=0)
    n_star_ref: float = Field(default=24.65, gt=0)
    series_ref: Literal["S", "D"] = "D"
    power_ref: Union[float, str] = "0.5 mW"
    waist_ref_mm: float = Field(default=0.8, gt=0)
    s_amplitude_ratio: float = Field(default=10.0 ** -0.5, gt=0)

    @field_validator("power_ref")
    @classmethod
    def _power_valid(cls, v):
        if parse_power(v) <= 0:
            raise ValueError("power_ref must be > 0")
        return v


class SystemConfig(_Section):
    probe: LaserConfig = LaserConfig(wavelength_nm=780.241, power="4 uW",
                                     residual_linewidth_mhz=0.1)
    coupling: LaserConfig = LaserConfig(wavelength_nm=480.0, power="0.5 mW")
    rates: RatesConfig = RatesConfig()
    vapor: VaporConfig = VaporConfig()
    omega_c_mhz: Optional[float] = None
    rydberg: Optional[RydbergConfig] = RydbergConfig(n=26, series="D")
    coupling_calibration: Optional[CalibrationConfig] = CalibrationConfig()
    counter_propagating: bool = True

    @model_validator(mode="after")
    def _omega_c_source(self):
        if self.omega_c_mhz is not None:
            if self.omega_c_mhz < 0:
                raise ValueError("omega_c_mhz must be >= 0")
            if "rydberg" in self.model_fields_set and self.rydberg is not None:
                raise ValueError("give either omega_c_mhz or a rydberg "
                                 "level, not both")
            # a direct Rabi frequency overrides the default level scaling
            object.__setattr__(self, "__dict__",
                               {**self.__dict__, "rydberg": None})
        elif self.rydberg is None:
            raise ValueError("coupling strength undefined: set omega_c_mhz "
                             "or a rydberg level with a calibration")
        return self


class FmConfig(_Section):
    mod_freq_mhz: float = Field(default=10.0, gt=0)
    mod_index: float = 0.3
    demod_phase_deg: Optional[float] = None  # None: dispersion quadrature
    electronic_gain: float = Field(default=1.0, gt=0)
    detector_rolloff: float = Field(default=1.0, gt=0, le=1)

    @field_validator("mod_index")
    @classmethod
    def _beta(cls, v):
        if not 0 < v <= 0.5:
            raise ValueError("mod_index must be in (0, 0.5] for the "
                             "first-order sideband treatment")
        return v


class NoiseConfig(_Section):
    white_psd_hz2_per_hz: float = Field(default=1e6 / math.pi, ge=0)
    random_walk_hz3: float = Field(default=0.0, ge=0)


class FastBranchConfig(_Section):
    proportional_gain: float = Field(default=3.4e7, ge=0)
    integrator_corner_hz: float = Field(default=1e6, ge=0)
    cutoff_hz: float = Field(default=1e6, gt=0)


class SlowBranchConfig(_Section):
    integrator_gain_per_s: float = Field(default=50.0, ge=0)
    output_range_hz: float = Field(default=5e6, gt=0)


class ControllerSettings(_Section):
    fast: FastBranchConfig = FastBranchConfig()
    slow: SlowBranchConfig = SlowBranchConfig()
    sign: Literal[-1, 1] = 1


class LockConfig(_Section):
    sample_rate_hz: float = Field(default=1e7, gt=0)
    duration_s: float = Field(default=0.1, gt=0)
    detector_noise_rms_v: float = Field(default=5e-4, ge=0)
    monitor_bandwidth_hz: Optional[float] = Field(default=1e5, gt=0)
    unlock_dwell_s: float = Field(default=1e-3, gt=0)
    initial_offset_hz: float = 0.0


class QuadratureConfig(_Section):
    method: Literal["analytic", "gauss_hermite", "trapezoid"] = "analytic"
    node_count: int = 200
    velocity_cutoff_sigmas: float = Field(default=6.0, gt=0)
    convergence_tol: Optional[float] = Field(default=None, gt=0)

    @field_validator("node_count")
    @classmethod
    def _nodes(cls, v):
        if v < 8:
            raise ValueError("node_count ≥ 8 required")
        return v


class ScanConfig(_Section):
    half_span_mhz: float = Field(default=30.0, gt=0)
    coarse_step_mhz: float = Field(default=0.25, gt=0)
    fine_window_mhz: float = Field(default=4.0, ge=0)
    fine_step_mhz: float = Field(default=0.02, gt=0)


class BeatConfig(_Section):
    sample_rate_hz: float = Field(default=2e6, gt=0)
    duration_s: float = Field(default=1.0, gt=0)
    segment_s: float = Field(default=1e-3, gt=0)
    depths: Optional[list[int]] = None
    partner_white_psd_hz2_per_hz: Optional[float] = Field(default=None, ge=0)
    partner_random_walk_hz3: Optional[float] = Field(default=None, ge=0)

    @field_validator("depths")
    @classmethod
    def _depths(cls, v):
        if v is not None and any(d < 1 for d in v):
            raise ValueError("averaging depths must be >= 1")
        return v


class FitInitConfig(_Section):
    gamma_rel_mhz: float = Field(default=0.5, gt=0)
    amplitude: float = 1.0
    baseline: float = 0.0
    center_mhz: float = 0.0
    omega_c_mhz: Optional[float] = Field(default=None, gt=0)


class FitConfig(_Section):
    span_mhz: float = Field(default=20.0, gt=0)
    points: int = Field(default=401, ge=16)
    noise_rms: float = Field(default=0.01, ge=0)
    free: list[str] = Field(default_factory=lambda: [
        "gamma_rel_laser", "amplitude", "baseline", "center"])
    init: FitInitConfig = FitInitConfig()

    @field_validator("free")
    @classmethod
    def _free_names(cls, v):
        allowed = {"omega_c", "gamma_rel_laser", "amplitude", "baseline",
                   "center"}
        bad = [name for name in v if name not in allowed]
        if bad:
            raise ValueError(f"unknown fit parameters {bad}; "
                             f"allowed: {sorted(allowed)}")
        if "gamma_rel_laser" not in v:
            raise ValueError("the fit must free gamma_rel_laser")
        return v


class OutputsConfig(_Section):
    dir: Optional[str] = None
    decimation: int = Field(default=100, ge=1)


class ScenarioConfig(_Section):
    """One fully specified numerical experiment."""

    seed: int = Field(default=1, ge=0, lt=2 ** 64)
    system: SystemConfig = SystemConfig()
    fm: FmConfig = FmConfig()
    noise: NoiseConfig = NoiseConfig()
    controller: ControllerSettings = ControllerSettings()
    lock: LockConfig = LockConfig()
    quadrature: QuadratureConfig = QuadratureConfig()
    scan: ScanConfig = ScanConfig()
    beat: BeatConfig = BeatConfig()
    fit: FitConfig = FitConfig()
    outputs: OutputsConfig = OutputsConfig()

    @model_validator(mode="after")
    def _loop_rates(self):
        if self.lock.sample_rate_hz < 10 * self.controller.fast.cutoff_hz:
            raise ValueError("lock.sample_rate_hz must be at least 10x "
                             "controller.fast.cutoff_hz")
        return self


def _format_violation(err: dict) -> str:
    loc = ".".join(str(p) for p in err["loc"])
    return f"{loc or '<root>'}: {err['msg']}"


def validate_config(data) -> ScenarioConfig:
    """Accepts YAML text, a dict, or None (all defaults); raises ConfigError
    listing every violation."""
    if data is None:
        data = {}
    if isinstance(data, str):
        try:
            data = yaml.safe_load(data)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<yaml>: {exc}"]) from exc
        if data is None:
            data = {}
    if not isinstance(data, dict):
        raise ConfigError(["<root>: configuration must be a mapping"])
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_format_violation(e) for e in exc.errors()]) from exc


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_config(fh.read())


def config_digest(config: ScenarioConfig) -> str:
    """Content hash of the effective configuration; whitespace-insensitive
    because it hashes the parsed, canonicalized document."""
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def dump_effective_config(config: ScenarioConfig) -> str:
    """YAML rendering of the fully resolved configuration."""
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True,
                          default_flow_style=False)


def derive_seed(root_seed: int, stream: str) -> int:
    """Per-module 64-bit seed from the root seed and the stream registry."""
    idx = SEED_STREAMS[stream]
    seq = np.random.SeedSequence(entropy=root_seed, spawn_key=(idx,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def stream_rng(root_seed: int, stream: str) -> np.random.Generator:
    idx = SEED_STREAMS[stream]
    return np.random.default_rng(
        np.random.SeedSequence(entropy=root_seed, spawn_key=(idx,)))


def build_system(cfg: SystemConfig) -> CascadeSystem:
    """Interface units to internal units, in one place."""
    probe = LaserParams(
        wavelength=cfg.probe.wavelength_nm * 1e-9,
        power=cfg.probe.power_w,
        waist_radius=cfg.probe.waist_radius_mm * 1e-3,
        residual_linewidth=cfg.probe.residual_linewidth_mhz * 1e6,
        static_detuning=cfg.probe.static_detuning_mhz * MHZ)
    coupling = LaserParams(
        wavelength=cfg.coupling.wavelength_nm * 1e-9,
        power=cfg.coupling.power_w,
        waist_radius=cfg.coupling.waist_radius_mm * 1e-3,
        residual_linewidth=cfg.coupling.residual_linewidth_mhz * 1e6,
        static_detuning=cfg.coupling.static_detuning_mhz * MHZ)
    rates = DecayRates(
        gamma_e=cfg.rates.gamma_e_mhz * MHZ,
        gamma_r=cfg.rates.gamma_r_mhz * MHZ,
        gamma_transit=cfg.rates.transit_mhz * MHZ,
        gamma_rel_laser=math.pi * cfg.rates.rel_laser_linewidth_mhz * 1e6)
    vapor = VaporParams(
        temperature=cfg.vapor.temperature_k,
        atomic_mass=cfg.vapor.atomic_mass_u * ATOMIC_MASS_KG,
        cell_length=cfg.vapor.cell_length_mm * 1e-3,
        peak_optical_depth=cfg.vapor.peak_optical_depth)
    if cfg.omega_c_mhz is not None:
        omega_c = cfg.omega_c_mhz * MHZ
    else:
        ry = cfg.rydberg
        defect = ry.quantum_defect
        if defect is None:
            defect = (DEFAULT_QUANTUM_DEFECT_S if ry.series == "S"
                      else DEFAULT_QUANTUM_DEFECT_D)
        level = RydbergLevel(n=ry.n, series=Series(ry.series),
                             quantum_defect=defect)
        cal = cfg.coupling_calibration or CalibrationConfig()
        calibration = CouplingCalibration(
            omega_c_ref=cal.omega_c_ref_mhz * MHZ,
            n_star_ref=cal.n_star_ref,
            series_ref=Series(cal.series_ref),
            power_ref=parse_power(cal.power_ref),
            waist_ref=cal.waist_ref_mm * 1e-3,
            s_amplitude_ratio=cal.s_amplitude_ratio)
        omega_c = coupling_rabi_frequency(coupling, level, calibration)
    return CascadeSystem(probe=probe, coupling=coupling, rates=rates,
                         vapor=vapor, omega_c=omega_c,
                         counter_propagating=cfg.counter_propagating)


def build_quadrature(cfg: QuadratureConfig) -> QuadratureSpec:
    return QuadratureSpec(method=cfg.method, node_count=cfg.node_count,
                          velocity_cutoff=cfg.velocity_cutoff_sigmas,
                          convergence_tol=cfg.convergence_tol)


def build_fm(cfg: FmConfig, system: CascadeSystem,
             quad: QuadratureSpec) -> FmParams:
    """Resolve the demodulation phase (dispersion quadrature by default)."""
    base = FmParams(omega_m=cfg.mod_freq_mhz * MHZ, beta=cfg.mod_index,
                    electronic_gain=cfg.electronic_gain,
                    detector_rolloff=cfg.detector_rolloff)
    if cfg.demod_phase_deg is not None:
        theta = math.radians(cfg.demod_phase_deg)
    else:
        theta = dispersive_phase(system, base, quad,
                                 delta_p0=system.probe.static_detuning)
    return FmParams(omega_m=base.omega_m, beta=base.beta, theta=theta,
                    electronic_gain=base.electronic_gain,
                    detector_rolloff=base.detector_rolloff)


def build_noise(cfg: NoiseConfig, seed: int) -> NoiseModel:
    return NoiseModel(white_psd=cfg.white_psd_hz2_per_hz,
                      random_walk_coeff=cfg.random_walk_hz3, seed=seed)


def build_controller(cfg: ControllerSettings) -> ControllerConfig:
    return ControllerConfig(
        fast=FastBranch(proportional_gain=cfg.fast.proportional_gain,
                        integrator_corner=cfg.fast.integrator_corner_hz,
                        cutoff=cfg.fast.cutoff_hz),
        slow=SlowBranch(integrator_gain=cfg.slow.integrator_gain_per_s,
                        output_range=cfg.slow.output_range_hz),
        sign=cfg.sign)


def tool_version() -> str:
    return __version__
