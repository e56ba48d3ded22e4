import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import voigt_profile

from dm_oracle import steady_state_chi
from eitlock.eit import (CascadeSystem, QuadratureSpec, cold_spectrum,
                         field_transmission, susceptibility_doppler,
                         susceptibility_single_velocity, two_tier_grid)
from eitlock.errors import QuadratureConvergenceError
from eitlock.reference import DecayRates, LaserParams, VaporParams

TWO_PI = 2 * math.pi


class TestSingleVelocity:
    def test_two_level_resonance_anchor(self, hot_system):
        bare = replace(hot_system, omega_c=0.0)
        chi = susceptibility_single_velocity(0.0, 0.0, 0.0, bare)
        assert chi == pytest.approx(1j, rel=1e-14)

    def test_two_level_closed_form(self, hot_system):
        # at delta_p = gamma_ge the response is i*(1+i)/2
        bare = replace(hot_system, omega_c=0.0)
        chi = susceptibility_single_velocity(bare.gamma_ge, 0.0, 0.0, bare)
        assert chi == pytest.approx(1j * (1 + 1j) / 2, rel=1e-14)

    def test_strong_coupling_vs_density_matrix(self, hot_system):
        sys10 = replace(hot_system, omega_c=10 * hot_system.gamma_2)
        oracle = steady_state_chi(0.0, 0.0, 0.0, sys10)
        model = susceptibility_single_velocity(0.0, 0.0, 0.0, sys10)
        assert abs(oracle - model) / abs(oracle) < 1e-2

    def test_density_matrix_grid(self, hot_system):
        # weak probe vs full steady state over a 20x20 detuning grid
        dps = TWO_PI * 1e6 * np.linspace(-10, 10, 20)
        dcs = TWO_PI * 1e6 * np.linspace(-10, 10, 20)
        worst = 0.0
        for dp in dps:
            for dc in dcs:
                oracle = steady_state_chi(dp, dc, 0.0, hot_system)
                model = susceptibility_single_velocity(dp, dc, 0.0,
                                                       hot_system)
                worst = max(worst, abs(oracle - model) / abs(oracle))
        assert worst < 1e-2

    def test_density_matrix_with_velocity(self, hot_system):
        oracle = steady_state_chi(TWO_PI * 2e6, -TWO_PI * 3e6, 12.0,
                                  hot_system)
        model = susceptibility_single_velocity(TWO_PI * 2e6, -TWO_PI * 3e6,
                                               12.0, hot_system)
        assert abs(oracle - model) / abs(oracle) < 1e-2

    def test_absorption_nonnegative_randomized(self, hot_system):
        rng = np.random.default_rng(7)
        dp = TWO_PI * 1e6 * rng.uniform(-300, 300, 500)
        dc = TWO_PI * 1e6 * rng.uniform(-300, 300, 500)
        v = rng.uniform(-500, 500, 500)
        chi = susceptibility_single_velocity(dp, dc, v, hot_system)
        assert np.all(chi.imag >= 0)

    def test_coupling_free_response_ignores_coupling_detuning(self,
                                                              hot_system):
        bare = replace(hot_system, omega_c=0.0)
        dcs = TWO_PI * 1e6 * np.linspace(-50, 50, 7)
        chi = susceptibility_single_velocity(TWO_PI * 1e6, dcs, 3.0, bare)
        assert np.max(np.abs(chi - chi[0])) < 1e-15

    def test_dark_state_limit(self, hot_system):
        # no two-photon decay, exact two-photon resonance: fully transparent
        dark_rates = DecayRates(gamma_e=hot_system.rates.gamma_e)
        dark = replace(hot_system, rates=dark_rates)
        assert dark.gamma_2 == 0.0
        chi = susceptibility_single_velocity(0.0, 0.0, 0.0, dark)
        assert chi == 0.0


class TestDopplerAverage:
    def test_frozen_vapor_limit(self, hot_system):
        cold_vapor = replace(hot_system.vapor, temperature=1e-9)
        frozen = replace(hot_system, vapor=cold_vapor)
        avg = susceptibility_doppler(TWO_PI * 2e6, -TWO_PI * 1e6, frozen)
        ref = susceptibility_single_velocity(TWO_PI * 2e6, -TWO_PI * 1e6,
                                             0.0, frozen)
        assert abs(avg - ref) < 1e-6

    def test_voigt_limit_against_closed_form(self, hot_system):
        bare = replace(hot_system, omega_c=0.0)
        g1 = bare.gamma_ge
        sw = bare.doppler_sigma_probe
        dps = TWO_PI * 1e6 * np.linspace(-400, 400, 41)
        chi = susceptibility_doppler(dps, 0.0, bare)
        expected = math.pi * g1 * voigt_profile(dps, sw, g1)
        assert np.max(np.abs(chi.imag - expected)) < 1e-6

    def test_voigt_peak_against_dense_trapezoid(self, hot_system):
        bare = replace(hot_system, omega_c=0.0)
        dense = QuadratureSpec(method="trapezoid", node_count=100001,
                               velocity_cutoff=6.0)
        a = susceptibility_doppler(0.0, 0.0, bare)
        b = susceptibility_doppler(0.0, 0.0, bare, dense)
        assert abs(a - b) < 1e-6

    def test_analytic_vs_dense_trapezoid_with_coupling(self, hot_system):
        dense = QuadratureSpec(method="trapezoid", node_count=200001,
                               velocity_cutoff=7.0)
        dcs = TWO_PI * 1e6 * np.array([-16.3, -5.0, 0.0, 0.4, 16.2])
        a = susceptibility_doppler(0.0, dcs, hot_system)
        b = susceptibility_doppler(0.0, dcs, hot_system, dense)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_gauss_hermite_matches_trapezoid_when_resolved(self,
                                                           narrow_system):
        gh = QuadratureSpec(method="gauss_hermite", node_count=200)
        dense = QuadratureSpec(method="trapezoid", node_count=100001,
                               velocity_cutoff=8.0)
        dcs = TWO_PI * 1e6 * np.linspace(-10, 10, 11)
        a = susceptibility_doppler(0.0, dcs, narrow_system, gh)
        b = susceptibility_doppler(0.0, dcs, narrow_system, dense)
        assert np.max(np.abs(a - b)) < 1e-6

    def test_quadrature_doubling_converged(self, narrow_system, hot_system):
        # default node counts, each method in its applicable regime
        gh = QuadratureSpec(method="gauss_hermite", node_count=200)
        gh2 = QuadratureSpec(method="gauss_hermite", node_count=400)
        dcs = TWO_PI * 1e6 * np.linspace(-8, 8, 5)
        a = susceptibility_doppler(0.0, dcs, narrow_system, gh)
        b = susceptibility_doppler(0.0, dcs, narrow_system, gh2)
        assert np.max(np.abs(a - b)) < 1e-6

        bare = replace(hot_system, omega_c=0.0)
        tr = QuadratureSpec(method="trapezoid", node_count=4001)
        tr2 = QuadratureSpec(method="trapezoid", node_count=8002)
        c = susceptibility_doppler(0.0, dcs, bare, tr)
        d = susceptibility_doppler(0.0, dcs, bare, tr2)
        assert np.max(np.abs(c - d)) < 1e-6

    def test_convergence_check_raises_when_underresolved(self, hot_system):
        # room-temperature EIT is far too narrow for 64 thermal nodes
        quad = QuadratureSpec(method="gauss_hermite", node_count=64,
                              convergence_tol=1e-6)
        with pytest.raises(QuadratureConvergenceError):
            susceptibility_doppler(0.0, 0.0, hot_system, quad)

    def test_convergence_check_passes_when_resolved(self, narrow_system):
        quad = QuadratureSpec(method="gauss_hermite", node_count=200,
                              convergence_tol=1e-6)
        chi = susceptibility_doppler(0.0, 0.0, narrow_system, quad)
        assert np.isfinite(chi.real) and np.isfinite(chi.imag)

    def test_randomized_systems_match_dense_quadrature(self):
        # soak the pole decomposition across geometries and rate regimes;
        # floors on the dephasing and temperature keep the dense grid able
        # to resolve the narrow velocity structure
        rng = np.random.default_rng(2024)
        dense = QuadratureSpec(method="trapezoid", node_count=200001,
                               velocity_cutoff=7.0)
        for k in range(8):
            lam_p = rng.uniform(600e-9, 900e-9)
            lam_c = rng.uniform(400e-9, 600e-9)
            sys_k = CascadeSystem(
                probe=LaserParams(wavelength=lam_p,
                                  residual_linewidth=rng.uniform(0, 3e5)),
                coupling=LaserParams(wavelength=lam_c),
                rates=DecayRates(
                    gamma_e=TWO_PI * rng.uniform(3e6, 10e6),
                    gamma_r=TWO_PI * rng.uniform(0, 1e5),
                    gamma_transit=TWO_PI * rng.uniform(0, 1e5),
                    gamma_rel_laser=TWO_PI * rng.uniform(2e5, 2e6)),
                vapor=VaporParams(temperature=rng.uniform(200, 400),
                                  peak_optical_depth=1.0),
                omega_c=TWO_PI * rng.uniform(0, 6e6),
                counter_propagating=bool(k % 2))
            dp = TWO_PI * 1e6 * rng.uniform(-20, 20, 6)
            dc = TWO_PI * 1e6 * rng.uniform(-25, 25, 6)
            exact = susceptibility_doppler(dp, dc, sys_k)
            brute = susceptibility_doppler(dp, dc, sys_k, dense)
            assert np.max(np.abs(exact - brute)) < 1e-6

    def test_pole_mean_derivative_consistent(self):
        # the double-pole helper is the derivative of the single-pole one
        from eitlock.eit import (_gaussian_pole_mean,
                                 _gaussian_pole_mean_deriv)
        rng = np.random.default_rng(5)
        sigma_v = 170.0
        poles = (rng.uniform(-300, 300, 12)
                 + 1j * rng.uniform(0.5, 50, 12) * rng.choice([-1, 1], 12))
        h = 1e-4
        numeric = (_gaussian_pole_mean(poles + h, sigma_v)
                   - _gaussian_pole_mean(poles - h, sigma_v)) / (2 * h)
        analytic = _gaussian_pole_mean_deriv(poles, sigma_v)
        assert np.max(np.abs(numeric - analytic)
                      / np.abs(analytic)) < 1e-6

    def test_transparency_position_tracks_wavelength_ratio(self):
        # fixed probe offset, coupling scan: the transparency maximum sits
        # at -(lambda_p/lambda_c) times the probe offset
        sys = CascadeSystem(
            probe=LaserParams(wavelength=780.24e-9, residual_linewidth=1e5),
            coupling=LaserParams(wavelength=480e-9),
            rates=DecayRates(gamma_e=TWO_PI * 6.07e6,
                             gamma_transit=TWO_PI * 4e4,
                             gamma_rel_laser=math.pi * 2.8e5),
            vapor=VaporParams(temperature=293.0, peak_optical_depth=1.5),
            omega_c=TWO_PI * 2e6)
        ratio = 780.24 / 480.0
        dp0 = TWO_PI * 10e6
        dcs = TWO_PI * 1e6 * np.linspace(-20, -12, 4001)
        chi = susceptibility_doppler(dp0, dcs, sys)
        found = dcs[np.argmin(chi.imag)]
        assert found / TWO_PI / 1e6 == pytest.approx(-16.26, rel=0.03)
        assert found == pytest.approx(-ratio * dp0, rel=0.03)

    def test_feature_position_scaling_three_detunings(self, hot_system):
        ratio = hot_system.k_c / hot_system.k_p
        for mhz in (5.0, 10.0, 15.0):
            for sign in (1.0, -1.0):
                dp0 = sign * TWO_PI * mhz * 1e6
                center = -ratio * dp0
                dcs = center + TWO_PI * 1e6 * np.linspace(-3, 3, 1201)
                chi = susceptibility_doppler(dp0, dcs, hot_system)
                found = dcs[np.argmin(chi.imag)]
                assert found == pytest.approx(center, rel=0.03)

    def test_doppler_absorption_nonnegative(self, hot_system):
        rng = np.random.default_rng(11)
        dp = TWO_PI * 1e6 * rng.uniform(-400, 400, 200)
        dc = TWO_PI * 1e6 * rng.uniform(-40, 40, 200)
        chi = susceptibility_doppler(dp, dc, hot_system)
        assert np.all(chi.imag >= -1e-12)


class TestTransmission:
    def test_transparent_cell(self, hot_system):
        clear = replace(hot_system,
                        vapor=replace(hot_system.vapor, peak_optical_depth=0.0))
        dcs = TWO_PI * 1e6 * np.linspace(-20, 20, 7)
        t = field_transmission(0.0, dcs, clear)
        assert np.max(np.abs(t - 1.0)) == 0.0

    def test_resonant_attenuation_matches_optical_depth(self, hot_system):
        bare = replace(hot_system, omega_c=0.0)
        t = field_transmission(0.0, 0.0, bare)
        od = hot_system.vapor.peak_optical_depth
        assert abs(t) ** 2 == pytest.approx(math.exp(-od), rel=1e-10)

    def test_transparency_window_raises_transmission(self, hot_system):
        on = field_transmission(0.0, 0.0, hot_system)
        off = field_transmission(0.0, TWO_PI * 25e6, hot_system)
        assert abs(on) ** 2 > abs(off) ** 2

    def test_modulus_bounded(self, hot_system):
        rng = np.random.default_rng(3)
        dp = TWO_PI * 1e6 * rng.uniform(-200, 200, 100)
        dc = TWO_PI * 1e6 * rng.uniform(-30, 30, 100)
        t = field_transmission(dp, dc, hot_system)
        assert np.all(np.abs(t) <= 1.0 + 1e-12)


class TestColdSpectrum:
    def test_two_level_single_dip(self, cold_system):
        bare = replace(cold_system, omega_c=0.0)
        grid = TWO_PI * 1e6 * np.linspace(-10, 10, 401)
        tr = cold_spectrum(grid, bare)
        i_min = int(np.argmin(tr))
        assert abs(grid[i_min]) < TWO_PI * 0.2e6
        # single minimum: monotone on both sides
        assert np.all(np.diff(tr[:i_min + 1]) <= 1e-12)
        assert np.all(np.diff(tr[i_min:]) >= -1e-12)

    def test_central_transparency_feature(self, cold_system):
        grid = TWO_PI * 1e6 * np.linspace(-10, 10, 801)
        tr = cold_spectrum(grid, cold_system)
        center = tr[abs(grid) < TWO_PI * 0.5e6].max()
        shoulder = tr[(abs(grid) > TWO_PI * 2e6)
                      & (abs(grid) < TWO_PI * 4e6)].min()
        assert center > shoulder

    def test_dephasing_reduces_transparency_monotonically(self, cold_system):
        heights = []
        for rel_khz in (0.0, 70.0, 140.0, 280.0):
            rates = replace(cold_system.rates,
                            gamma_rel_laser=TWO_PI * rel_khz * 1e3)
            sys_i = replace(cold_system, rates=rates)
            grid = TWO_PI * 1e6 * np.linspace(-1, 1, 201)
            heights.append(cold_spectrum(grid, sys_i).max())
        assert all(a > b for a, b in zip(heights, heights[1:]))


class TestTwoTierGrid:
    def test_fine_windows_merged_sorted_unique(self):
        grid = two_tier_grid(10.0, 1.0, centers=(-3.0, 3.0),
                             fine_halfwidth=0.5, fine_step=0.05)
        assert np.all(np.diff(grid) > 0)
        assert grid[0] == -10.0 and grid[-1] == 10.0
        near = grid[np.abs(grid - 3.0) <= 0.5 + 1e-12]
        assert np.max(np.diff(near)) < 0.051

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            two_tier_grid(0.0, 1.0)
        with pytest.raises(ValueError):
            QuadratureSpec(node_count=4)
        with pytest.raises(ValueError):
            QuadratureSpec(method="simpson")
