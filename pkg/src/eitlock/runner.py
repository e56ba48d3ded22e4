"""Pipelines behind the service endpoints, plus client-side artifact writing.

Each run_* function is pure compute: ScenarioConfig in, response model out.
write_artifacts renders a response to CSV/JSON files (the CLI path); the
manifest records the digest, seed, per-artifact paths and wall-clock
timings. Identical config + seed give byte-identical CSVs.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import find_peaks

from . import __version__
from .csvio import ArtifactIOError, write_csv
from .eit import susceptibility_doppler, two_tier_grid
from .fmlock import (dc_transmission, error_signal_scan,
                     expected_feature_offsets, find_crossings)
from .metrology import (LinewidthEstimate, beat_note_linewidth, beat_psd,
                        fit_cold_eit, fitted_linewidth, cold_fit_model,
                        linewidth_rms_over_slope)
from .scenario import (MHZ, ScenarioConfig, build_controller, build_fm,
                       build_noise, build_quadrature, build_system,
                       config_digest, derive_seed, dump_effective_config,
                       stream_rng)
from .schemas import (BeatResponse, CrossingModel, ErrorSignalResponse,
                      ErrorSignalTraceModel, FitParameterModel, FitResponse,
                      LinewidthModel, LockResponse, RunHeader,
                      SpectrumResponse, SpectrumTrace, UnlockEventModel,
                      ValidateResponse)
from .servo import Discriminant, simulate_locked

SUBCOMMANDS = ("spectrum", "error-signal", "lock", "beat", "fit")


def _header(config: ScenarioConfig, subcommand: str) -> RunHeader:
    return RunHeader(subcommand=subcommand, config_digest=config_digest(config),
                     seed=config.seed, tool_version=__version__,
                     effective_config=config)


def _scan_grid(config: ScenarioConfig, system, fm):
    centers = expected_feature_offsets(system, fm)
    return two_tier_grid(
        half_span=config.scan.half_span_mhz * MHZ,
        coarse_step=config.scan.coarse_step_mhz * MHZ,
        centers=centers,
        fine_halfwidth=config.scan.fine_window_mhz * MHZ,
        fine_step=config.scan.fine_step_mhz * MHZ)


def run_validate(config: ScenarioConfig) -> ValidateResponse:
    return ValidateResponse(effective_config=config,
                            config_digest=config_digest(config))


def run_spectrum(config: ScenarioConfig) -> SpectrumResponse:
    system = build_system(config.system)
    quad = build_quadrature(config.quadrature)
    fm = build_fm(config.fm, system, quad)
    grid = _scan_grid(config, system, fm)
    dp0 = system.probe.static_detuning
    chi = susceptibility_doppler(np.full_like(grid, dp0), grid, system, quad)
    trans = np.asarray(dc_transmission(dp0, grid, system, fm, quad))
    peaks_mhz: list[float] = []
    if trans.size >= 3:
        idx, props = find_peaks(trans, prominence=1e-15)
        if idx.size:
            prom = props["prominences"]
            significant = prom >= 1e-3 * prom.max()
            ranked = idx[significant][np.argsort(prom[significant])[::-1][:10]]
            peaks_mhz = sorted(float(g) for g in grid[ranked] / MHZ)
    return SpectrumResponse(
        header=_header(config, "spectrum"),
        trace=SpectrumTrace(detuning_mhz=(grid / MHZ).tolist(),
                            re_chi=chi.real.tolist(),
                            im_chi=chi.imag.tolist(),
                            transmission=trans.tolist()),
        peaks_mhz=peaks_mhz,
        demod_phase_rad=fm.theta)


def _scan_trace(config: ScenarioConfig):
    system = build_system(config.system)
    quad = build_quadrature(config.quadrature)
    fm = build_fm(config.fm, system, quad)
    grid = _scan_grid(config, system, fm)
    trace = error_signal_scan(grid, system, fm, quad,
                              delta_p0=system.probe.static_detuning)
    return system, quad, fm, trace


def run_error_signal(config: ScenarioConfig) -> ErrorSignalResponse:
    system, quad, fm, trace = _scan_trace(config)
    reports = sorted(find_crossings(trace, min_slope_fraction=0.1),
                     key=lambda r: r.crossing)
    crossings = [CrossingModel(detuning_mhz=r.crossing / MHZ,
                               slope_v_per_mhz=r.slope * MHZ,
                               capture_range_mhz=r.capture_range / MHZ)
                 for r in reports]
    return ErrorSignalResponse(
        header=_header(config, "error-signal"),
        trace=ErrorSignalTraceModel(
            detuning_mhz=(trace.detunings / MHZ).tolist(),
            signal_v=trace.volts.tolist()),
        crossings=crossings,
        demod_phase_rad=fm.theta,
        sign_convention=trace.meta["sign_convention"])


def _linewidth_model(est: LinewidthEstimate) -> LinewidthModel:
    return LinewidthModel(value_hz=est.value, uncertainty_hz=est.uncertainty,
                          method=est.method.value, window_s=est.window,
                          resolution_bandwidth_hz=est.resolution_bandwidth,
                          upper_bound=est.upper_bound)


def run_lock(config: ScenarioConfig) -> LockResponse:
    system, quad, fm, trace = _scan_trace(config)
    carrier_window = min(config.scan.fine_window_mhz,
                         0.4 * config.fm.mod_freq_mhz) * MHZ
    disc = Discriminant.from_trace(
        trace, window=carrier_window,
        detector_noise_rms=config.lock.detector_noise_rms_v)
    controller = build_controller(config.controller)
    noise = build_noise(config.noise, derive_seed(config.seed, "lock"))
    result = simulate_locked(
        noise, controller, disc,
        sample_rate=config.lock.sample_rate_hz,
        duration=config.lock.duration_s,
        initial_offset=config.lock.initial_offset_hz,
        monitor_bandwidth=config.lock.monitor_bandwidth_hz,
        unlock_dwell=config.lock.unlock_dwell_s)
    estimate = linewidth_rms_over_slope(
        result.monitor_volts, disc.slope,
        averaging_window=config.lock.duration_s,
        sample_rate=config.lock.sample_rate_hz)
    dec = config.outputs.decimation
    t = result.error.times()[::dec]
    return LockResponse(
        header=_header(config, "lock"),
        sample_rate_hz=config.lock.sample_rate_hz,
        decimation=dec,
        time_s=t.tolist(),
        error_hz=result.error.samples[::dec].tolist(),
        control_hz=result.control.samples[::dec].tolist(),
        monitor_v=result.monitor_volts[::dec].tolist(),
        unlock_events=[UnlockEventModel(start_s=s, duration_s=d)
                       for s, d in result.unlock_events],
        slope_v_per_mhz=disc.slope * 1e6,
        capture_range_mhz=disc.capture_range / 1e6,
        rms_monitor_v=float(np.std(result.monitor_volts
                                   - result.monitor_volts.mean())),
        linewidth=_linewidth_model(estimate))


def run_beat(config: ScenarioConfig) -> BeatResponse:
    from .servo import NoiseModel, simulate_free_run
    b = config.beat
    white_b = (b.partner_white_psd_hz2_per_hz
               if b.partner_white_psd_hz2_per_hz is not None
               else config.noise.white_psd_hz2_per_hz)
    walk_b = (b.partner_random_walk_hz3
              if b.partner_random_walk_hz3 is not None
              else config.noise.random_walk_hz3)
    laser_a = simulate_free_run(
        build_noise(config.noise, derive_seed(config.seed, "beat_a")),
        b.sample_rate_hz, b.duration_s)
    laser_b = simulate_free_run(
        NoiseModel(white_psd=white_b, random_walk_coeff=walk_b,
                   seed=derive_seed(config.seed, "beat_b")),
        b.sample_rate_hz, b.duration_s)
    estimates = beat_note_linewidth(laser_a, laser_b, b.segment_s,
                                    depths=b.depths)
    freqs, psd = beat_psd(laser_a, laser_b, b.segment_s)
    return BeatResponse(
        header=_header(config, "beat"),
        estimates=[_linewidth_model(e) for e in estimates],
        psd_freq_hz=freqs.tolist(),
        psd_value=psd.tolist())


_FIT_INTERFACE_UNITS = {
    "omega_c": ("omega_c_mhz", MHZ),
    "gamma_rel_laser": ("gamma_rel_laser_mhz", MHZ),
    "center": ("center_mhz", MHZ),
    "amplitude": ("amplitude", 1.0),
    "baseline": ("baseline", 1.0),
}


def run_fit(config: ScenarioConfig) -> FitResponse:
    system = build_system(config.system)
    f = config.fit
    grid = np.linspace(-0.5 * f.span_mhz, 0.5 * f.span_mhz, f.points) * MHZ
    truth = cold_fit_model(grid, system, {})
    rng = stream_rng(config.seed, "fit_noise")
    data = truth + (rng.normal(0.0, f.noise_rms, grid.size)
                    if f.noise_rms > 0 else 0.0)
    init = {
        "gamma_rel_laser": f.init.gamma_rel_mhz * MHZ,
        "amplitude": f.init.amplitude,
        "baseline": f.init.baseline,
        "center": f.init.center_mhz * MHZ,
    }
    if "omega_c" in f.free:
        init["omega_c"] = (f.init.omega_c_mhz * MHZ
                           if f.init.omega_c_mhz is not None
                           else system.omega_c)
    result = fit_cold_eit(grid, data, system, init=init, free=f.free,
                          noise_sigma=f.noise_rms or None)
    model = cold_fit_model(grid, system, result.parameters)
    params = []
    for name in result.param_names:
        label, scale = _FIT_INTERFACE_UNITS[name]
        params.append(FitParameterModel(
            name=label, value=result.parameters[name] / scale,
            uncertainty=result.uncertainties[name] / scale))
    return FitResponse(
        header=_header(config, "fit"),
        converged=result.converged,
        iterations=result.iterations,
        residual_norm=result.residual_norm,
        reduced_chi_square=result.reduced_chi_square,
        parameters=params,
        linewidth=_linewidth_model(fitted_linewidth(result)),
        detuning_mhz=(grid / MHZ).tolist(),
        measured=np.asarray(data).tolist(),
        model=np.asarray(model).tolist(),
        residuals=(np.asarray(data) - np.asarray(model)).tolist())


RUNNERS = {
    "spectrum": run_spectrum,
    "error-signal": run_error_signal,
    "lock": run_lock,
    "beat": run_beat,
    "fit": run_fit,
}


@dataclass
class RunManifest:
    """Record of one run: what was computed, from what, into which files."""

    tool_version: str
    subcommand: str
    config_digest: str
    seed: int
    artifacts: list = field(default_factory=list)
    timings_s: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _write_json(path, payload) -> None:
    try:
        directory = os.path.dirname(os.path.abspath(path)) or "."
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload if isinstance(payload, str)
                         else json.dumps(payload, indent=2, sort_keys=True) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def _artifact(manifest, outdir, name, filename, rows=None):
    path = os.path.join(outdir, filename)
    entry = {"name": name, "path": path}
    if rows is not None:
        entry["rows"] = rows
    manifest.artifacts.append(entry)
    return path


def write_artifacts(response, outdir: str, manifest: RunManifest) -> None:
    sub = response.header.subcommand
    if sub == "spectrum":
        tr = response.trace
        write_csv(_artifact(manifest, outdir, "spectrum", "spectrum.csv",
                            len(tr.detuning_mhz)),
                  ["detuning_MHz", "re_chi", "im_chi", "transmission"],
                  [tr.detuning_mhz, tr.re_chi, tr.im_chi, tr.transmission])
        _write_json(_artifact(manifest, outdir, "peaks", "peaks.json"),
                    {"peaks_mhz": response.peaks_mhz,
                     "demod_phase_rad": response.demod_phase_rad})
    elif sub == "error-signal":
        tr = response.trace
        write_csv(_artifact(manifest, outdir, "error_signal",
                            "error_signal.csv", len(tr.detuning_mhz)),
                  ["detuning_MHz", "signal_V"],
                  [tr.detuning_mhz, tr.signal_v])
        _write_json(_artifact(manifest, outdir, "crossings",
                              "crossings.json"),
                    {"crossings": [c.model_dump() for c in response.crossings],
                     "demod_phase_rad": response.demod_phase_rad,
                     "sign_convention": response.sign_convention})
    elif sub == "lock":
        write_csv(_artifact(manifest, outdir, "lock_error",
                            "lock_error.csv", len(response.time_s)),
                  ["time_s", "value_Hz"], [response.time_s, response.error_hz])
        write_csv(_artifact(manifest, outdir, "lock_control",
                            "lock_control.csv", len(response.time_s)),
                  ["time_s", "value_Hz"],
                  [response.time_s, response.control_hz])
        write_csv(_artifact(manifest, outdir, "lock_monitor",
                            "lock_monitor.csv", len(response.time_s)),
                  ["time_s", "value_V"], [response.time_s, response.monitor_v])
        _write_json(_artifact(manifest, outdir, "lock_report",
                              "lock_report.json"),
                    {"unlock_events": [e.model_dump()
                                       for e in response.unlock_events],
                     "slope_v_per_mhz": response.slope_v_per_mhz,
                     "capture_range_mhz": response.capture_range_mhz,
                     "rms_monitor_v": response.rms_monitor_v,
                     "decimation": response.decimation,
                     "linewidth": response.linewidth.model_dump()})
    elif sub == "beat":
        ests = response.estimates
        write_csv(_artifact(manifest, outdir, "beat_estimates",
                            "beat_estimates.csv", len(ests)),
                  ["window_s", "fwhm_Hz", "resolution_bandwidth_Hz"],
                  [[e.window_s for e in ests], [e.value_hz for e in ests],
                   [e.resolution_bandwidth_hz or 0.0 for e in ests]])
        write_csv(_artifact(manifest, outdir, "beat_psd", "beat_psd.csv",
                            len(response.psd_freq_hz)),
                  ["freq_Hz", "psd_per_Hz"],
                  [response.psd_freq_hz, response.psd_value])
        _write_json(_artifact(manifest, outdir, "beat_report",
                              "beat_report.json"),
                    {"estimates": [e.model_dump() for e in ests]})
    elif sub == "fit":
        write_csv(_artifact(manifest, outdir, "fit_spectrum",
                            "fit_spectrum.csv", len(response.detuning_mhz)),
                  ["detuning_MHz", "measured", "model"],
                  [response.detuning_mhz, response.measured, response.model])
        write_csv(_artifact(manifest, outdir, "fit_residuals",
                            "fit_residuals.csv", len(response.detuning_mhz)),
                  ["detuning_MHz", "residual"],
                  [response.detuning_mhz, response.residuals])
        _write_json(_artifact(manifest, outdir, "fit_report",
                              "fit_report.json"),
                    {"converged": response.converged,
                     "iterations": response.iterations,
                     "residual_norm": response.residual_norm,
                     "reduced_chi_square": response.reduced_chi_square,
                     "parameters": [p.model_dump()
                                    for p in response.parameters],
                     "linewidth": response.linewidth.model_dump()})
    else:
        raise ValueError(f"unknown subcommand {sub!r}")


def persist_response(response, config: ScenarioConfig, outdir: str,
                     compute_time: float | None = None) -> RunManifest:
    """Write a response's artifacts, the effective config and the manifest."""
    manifest = RunManifest(tool_version=__version__,
                           subcommand=response.header.subcommand,
                           config_digest=config_digest(config),
                           seed=config.seed)
    if compute_time is not None:
        manifest.timings_s["compute"] = compute_time
    t0 = time.monotonic()
    os.makedirs(outdir, exist_ok=True)
    write_artifacts(response, outdir, manifest)
    eff = _artifact(manifest, outdir, "effective_config",
                    "effective_config.yaml")
    _write_json(eff, dump_effective_config(config))
    manifest.timings_s["write"] = time.monotonic() - t0
    _write_json(os.path.join(outdir, "run_manifest.json"), manifest.to_json())
    return manifest


def run_scenario(config: ScenarioConfig, subcommand: str,
                 outdir: str) -> RunManifest:
    """Execute one pipeline and write its artifacts plus the manifest."""
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}; "
                         f"choose from {SUBCOMMANDS}")
    t0 = time.monotonic()
    response = RUNNERS[subcommand](config)
    return persist_response(response, config, outdir,
                            compute_time=time.monotonic() - t0)
