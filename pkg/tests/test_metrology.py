import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import least_squares

from eitlock.errors import (DegenerateJacobianError, InsufficientSamplesError,
                            ResolutionError)
from eitlock.metrology import (LinewidthMethod, allan_deviation,
                               beat_note_linewidth, cold_fit_model,
                               fit_cold_eit, fitted_linewidth,
                               linewidth_rms_over_slope)
from eitlock.servo import FrequencyTimeSeries, NoiseModel, simulate_free_run

TWO_PI = 2 * math.pi


class TestRmsOverSlope:
    # reference (rms, slope, linewidth) operating points; slopes in V/Hz
    PAIRS = [(4.0e-3, 0.020 / 1e6, 200e3),
             (3.5e-3, 0.070 / 1e6, 50e3),
             (3.85e-3, 0.110 / 1e6, 35e3)]

    @pytest.mark.parametrize("rms,slope,expected", PAIRS)
    def test_reference_pairs_exact(self, rms, slope, expected):
        volts = np.tile([rms, -rms], 512)
        est = linewidth_rms_over_slope(volts, slope, averaging_window=1e-3,
                                       sample_rate=1024e3)
        assert est.value == pytest.approx(expected, rel=1e-12)
        assert est.method is LinewidthMethod.rms_over_slope

    def test_reference_rms_values_mutually_consistent(self):
        rms = [p[0] for p in self.PAIRS]
        assert max(rms) / min(rms) < 1.15

    def test_zero_series(self):
        est = linewidth_rms_over_slope(np.zeros(1000), 1e-8,
                                       averaging_window=1e-4,
                                       sample_rate=1e7)
        assert est.value == 0.0

    def test_exact_homogeneity(self):
        rng = np.random.default_rng(2)
        volts = rng.normal(0, 1e-3, 4096)
        a = linewidth_rms_over_slope(volts, 2e-8, 1e-4, 1e7).value
        b = linewidth_rms_over_slope(7.3 * volts, 7.3 * 2e-8, 1e-4, 1e7).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_detrend_modes(self):
        t = np.arange(1000)
        ramp = 1e-6 * t + 0.5
        none = linewidth_rms_over_slope(ramp, 1e-8, 1e-4, 1e7,
                                        detrend="none").value
        mean = linewidth_rms_over_slope(ramp, 1e-8, 1e-4, 1e7,
                                        detrend="mean").value
        lin = linewidth_rms_over_slope(ramp, 1e-8, 1e-4, 1e7,
                                       detrend="linear").value
        assert none > mean > lin
        assert lin == pytest.approx(0.0, abs=1e-6)

    def test_errors(self):
        with pytest.raises(ValueError):
            linewidth_rms_over_slope(np.zeros(100), 0.0, 1e-6, 1e7)
        with pytest.raises(InsufficientSamplesError):
            linewidth_rms_over_slope(np.zeros(10), 1e-8, 1.0, 1e7)


class TestBeatNote:
    FS = 1e7

    def test_identical_series_upper_bound(self):
        a = simulate_free_run(NoiseModel(white_psd=1e5, seed=3), self.FS,
                              0.01)
        ests = beat_note_linewidth(a, a, segment_length=102.4e-6)
        final = ests[-1]
        assert final.upper_bound
        assert final.value < 4 * final.resolution_bandwidth

    def test_two_independent_lasers_convolve(self):
        s0 = 0.5e6 / math.pi  # 0.5 MHz each -> 1 MHz beat
        a = simulate_free_run(NoiseModel(white_psd=s0, seed=101), self.FS,
                              0.05)
        b = simulate_free_run(NoiseModel(white_psd=s0, seed=202), self.FS,
                              0.05)
        est = beat_note_linewidth(a, b, segment_length=102.4e-6)[-1]
        assert est.value == pytest.approx(1e6, rel=0.10)
        assert est.method is LinewidthMethod.beat_note

    def test_symmetric_in_arguments(self):
        a = simulate_free_run(NoiseModel(white_psd=3e4, seed=5), self.FS,
                              0.02)
        b = simulate_free_run(NoiseModel(white_psd=3e4, seed=6), self.FS,
                              0.02)
        ab = beat_note_linewidth(a, b, segment_length=102.4e-6)[-1]
        ba = beat_note_linewidth(b, a, segment_length=102.4e-6)[-1]
        assert ab.value == pytest.approx(ba.value, rel=1e-6)

    def test_width_non_decreasing_with_drift(self):
        fs = 5e4
        noise = NoiseModel(white_psd=2e3 / math.pi, random_walk_coeff=2e4,
                           seed=77)
        quiet = NoiseModel(white_psd=2e3 / math.pi, seed=78)
        a = simulate_free_run(noise, fs, 40.0)
        b = simulate_free_run(quiet, fs, 40.0)
        ests = beat_note_linewidth(a, b, segment_length=2.0,
                                   depths=[1, 2, 4, 8, 16])
        widths = [e.value for e in ests]
        windows = [e.window for e in ests]
        assert windows == [2.0, 4.0, 8.0, 16.0, 32.0]
        for w0, w1 in zip(widths, widths[1:]):
            assert w1 >= 0.9 * w0
        assert widths[-1] > 1.2 * widths[0]

    def test_resolution_error(self):
        a = simulate_free_run(NoiseModel(white_psd=1e2, seed=8), 1e5, 0.5)
        b = simulate_free_run(NoiseModel(white_psd=1e2, seed=9), 1e5, 0.5)
        with pytest.raises(ResolutionError):
            beat_note_linewidth(a, b, segment_length=1e-3,
                                expected_width=100.0)

    def test_mismatched_rates_rejected(self):
        a = simulate_free_run(NoiseModel(seed=1), 1e5, 0.01)
        b = simulate_free_run(NoiseModel(seed=1), 2e5, 0.01)
        with pytest.raises(ValueError):
            beat_note_linewidth(a, b, segment_length=1e-3)


class TestAllanDeviation:
    def test_constant_series_zero(self):
        series = FrequencyTimeSeries(np.full(100000, 123.4), 1e5)
        taus, adev = allan_deviation(series, [1e-3, 1e-2, 1e-1])
        assert np.all(adev < 1e-6)

    def test_white_noise_signature(self):
        h0 = 1e4
        series = simulate_free_run(NoiseModel(white_psd=h0, seed=11), 1e5,
                                   20.0)
        taus, adev = allan_deviation(series, [1e-3, 1e-2, 1e-1, 1.0])
        slope = np.polyfit(np.log(taus), np.log(adev), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)
        # white-frequency closed form sqrt(h0/(2 tau))
        assert adev[0] == pytest.approx(math.sqrt(h0 / (2 * taus[0])),
                                        rel=0.05)

    def test_random_walk_signature(self):
        k = 1e4
        slopes = []
        for seed in (12, 13, 14):
            series = simulate_free_run(
                NoiseModel(random_walk_coeff=k, seed=seed), 1e5, 20.0)
            taus, adev = allan_deviation(series,
                                         [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
            slopes.append(np.polyfit(np.log(taus), np.log(adev), 1)[0])
        assert np.mean(slopes) == pytest.approx(0.5, abs=0.05)

    def test_tau_bounds(self):
        series = FrequencyTimeSeries(np.zeros(1000), 1e3)
        with pytest.raises(InsufficientSamplesError):
            allan_deviation(series, [0.5])  # > duration/4


class TestColdFit:
    INIT = {"gamma_rel_laser": TWO_PI * 0.5e6, "amplitude": 0.9,
            "baseline": 0.05, "center": TWO_PI * 0.3e6}
    FREE = ("gamma_rel_laser", "amplitude", "baseline", "center")

    def _grid(self):
        return TWO_PI * 1e6 * np.linspace(-10, 10, 401)

    def _truth(self, cold_system, gamma=TWO_PI * 280e3):
        rates = replace(cold_system.rates, gamma_rel_laser=gamma)
        return replace(cold_system, rates=rates)

    def test_noiseless_self_consistency(self, cold_system):
        sys_true = self._truth(cold_system)
        grid = self._grid()
        data = cold_fit_model(grid, sys_true, {})
        result = fit_cold_eit(grid, data, cold_system, init=self.INIT,
                              free=self.FREE)
        assert result.converged
        assert result.parameters["gamma_rel_laser"] == pytest.approx(
            TWO_PI * 280e3, rel=1e-4)
        assert result.parameters["amplitude"] == pytest.approx(1.0, rel=1e-4)
        assert abs(result.parameters["center"]) < TWO_PI * 20.0

    def test_matches_scipy_least_squares(self, cold_system):
        sys_true = self._truth(cold_system)
        grid = self._grid()
        rng = np.random.default_rng(0)
        data = cold_fit_model(grid, sys_true, {}) + rng.normal(0, 0.01,
                                                               grid.size)
        ours = fit_cold_eit(grid, data, cold_system, init=self.INIT,
                            free=self.FREE, noise_sigma=0.01)

        names = list(self.FREE)

        def resid(x):
            params = {"gamma_rel_laser": math.exp(x[0]), "amplitude": x[1],
                      "baseline": x[2], "center": x[3]}
            return cold_fit_model(grid, cold_system, params) - data

        x0 = [math.log(self.INIT["gamma_rel_laser"]), self.INIT["amplitude"],
              self.INIT["baseline"], self.INIT["center"]]
        ref = least_squares(resid, x0, method="lm", xtol=1e-14)
        assert ours.parameters["gamma_rel_laser"] == pytest.approx(
            math.exp(ref.x[0]), rel=1e-5)
        assert ours.parameters["center"] == pytest.approx(ref.x[3],
                                                          abs=TWO_PI * 100.0)

    def test_reduced_chi_square_near_unity(self, cold_system):
        sys_true = self._truth(cold_system)
        grid = self._grid()
        truth = cold_fit_model(grid, sys_true, {})
        chi2 = []
        for seed in range(6):
            rng = np.random.default_rng(seed)
            data = truth + rng.normal(0, 0.01, grid.size)
            result = fit_cold_eit(grid, data, cold_system, init=self.INIT,
                                  free=self.FREE, noise_sigma=0.01)
            chi2.append(result.reduced_chi_square)
        assert np.mean(chi2) == pytest.approx(1.0, abs=0.2)

    def test_transit_contribution_subdominant(self, cold_system):
        # regenerate and fit with the transit dephasing pinned at its bound
        # versus zero: the recovered relative dephasing moves by less than
        # the tolerance band
        sys_true = self._truth(cold_system)
        grid = self._grid()
        data = cold_fit_model(grid, sys_true, {})
        recovered = []
        for transit in (TWO_PI * 40e3, 0.0):
            rates = replace(cold_system.rates, gamma_transit=transit)
            sys_fit = replace(cold_system, rates=rates)
            result = fit_cold_eit(grid, data, sys_fit, init=self.INIT,
                                  free=self.FREE)
            recovered.append(result.parameters["gamma_rel_laser"])
        assert abs(recovered[0] - recovered[1]) < TWO_PI * 50e3

    def test_degenerate_parameter_detected(self, cold_system):
        grid = self._grid()
        data = np.full(grid.size, 0.5)
        init = {"gamma_rel_laser": TWO_PI * 0.3e6, "amplitude": 0.0,
                "baseline": 0.5, "center": 0.0}
        with pytest.raises(DegenerateJacobianError):
            # zero amplitude hides the lineshape parameters entirely
            fit_cold_eit(grid, data, cold_system, init=init,
                         free=("gamma_rel_laser", "baseline"))

    def test_linewidth_quote(self, cold_system):
        sys_true = self._truth(cold_system)
        grid = self._grid()
        data = cold_fit_model(grid, sys_true, {})
        result = fit_cold_eit(grid, data, cold_system, init=self.INIT,
                              free=self.FREE)
        quote = fitted_linewidth(result)
        assert quote.value == pytest.approx(280e3, rel=1e-3)
        assert quote.method is LinewidthMethod.spectrum_fit

    def test_rejects_unknown_and_missing(self, cold_system):
        grid = self._grid()
        data = np.zeros(grid.size)
        with pytest.raises(ValueError):
            fit_cold_eit(grid, data, cold_system, init={}, free=("bogus",))
        with pytest.raises(ValueError):
            fit_cold_eit(grid, data, cold_system, init={},
                         free=("gamma_rel_laser",))
