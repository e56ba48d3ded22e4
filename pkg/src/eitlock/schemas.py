"""Request/response models of the service layer.

The request body of every run endpoint is a ScenarioConfig; responses carry
the effective configuration, its digest, and the computed artifacts as plain
arrays in interface units (MHz, V, Hz, s).
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict

from .scenario import ScenarioConfig


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HealthResponse(_Model):
    status: str
    version: str


class ValidateResponse(_Model):
    effective_config: ScenarioConfig
    config_digest: str


class RunHeader(_Model):
    subcommand: str
    config_digest: str
    seed: int
    tool_version: str
    effective_config: ScenarioConfig


class SpectrumTrace(_Model):
    detuning_mhz: list[float]
    re_chi: list[float]
    im_chi: list[float]
    transmission: list[float]


class SpectrumResponse(_Model):
    header: RunHeader
    trace: SpectrumTrace
    peaks_mhz: list[float]
    demod_phase_rad: float


class ErrorSignalTraceModel(_Model):
    detuning_mhz: list[float]
    signal_v: list[float]


class CrossingModel(_Model):
    detuning_mhz: float
    slope_v_per_mhz: float
    capture_range_mhz: float


class ErrorSignalResponse(_Model):
    header: RunHeader
    trace: ErrorSignalTraceModel
    crossings: list[CrossingModel]
    demod_phase_rad: float
    sign_convention: str


class UnlockEventModel(_Model):
    start_s: float
    duration_s: float


class LinewidthModel(_Model):
    value_hz: float
    uncertainty_hz: float
    method: str
    window_s: float
    resolution_bandwidth_hz: Optional[float] = None
    upper_bound: bool = False


class LockResponse(_Model):
    header: RunHeader
    sample_rate_hz: float
    decimation: int
    time_s: list[float]
    error_hz: list[float]
    control_hz: list[float]
    monitor_v: list[float]
    unlock_events: list[UnlockEventModel]
    slope_v_per_mhz: float
    capture_range_mhz: float
    rms_monitor_v: float
    linewidth: LinewidthModel


class BeatResponse(_Model):
    header: RunHeader
    estimates: list[LinewidthModel]
    psd_freq_hz: list[float]
    psd_value: list[float]


class FitParameterModel(_Model):
    name: str
    value: float
    uncertainty: float


class FitResponse(_Model):
    header: RunHeader
    converged: bool
    iterations: int
    residual_norm: float
    reduced_chi_square: Optional[float]
    parameters: list[FitParameterModel]
    linewidth: LinewidthModel
    detuning_mhz: list[float]
    measured: list[float]
    model: list[float]
    residuals: list[float]


class ErrorRecord(_Model):
    type: str
    message: str
