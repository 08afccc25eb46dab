"""Stationary density, PDE evolution, sampling and true spectra."""
from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, interpolate, stats

from fragdeconv.kernels import h1, h2
from fragdeconv.spectrum import GridMismatchError, SpectrumGrid, symmetric_xi_grid
from fragdeconv.stationary import (
    CFLError,
    ConvergenceError,
    evolve_pde,
    identity_gstar,
    inverse_moments,
    relaxation_slope,
    sample_from_N,
    solve_stationary,
    spectral_diagnostics,
    true_spectra,
)


@pytest.fixture(params=["h1", "h2"])
def solved(request, N_h1, N_h2, kernel_h1, kernel_h2):
    return (kernel_h1, N_h1) if request.param == "h1" else (kernel_h2, N_h2)


class TestStationaryIdentities:
    """Mass, boundary value, mean and tail of the solved density."""

    def test_mass(self, solved):
        _, N = solved
        assert N.mass() == pytest.approx(1.0, abs=1e-6)

    def test_boundary_and_positivity(self, solved):
        _, N = solved
        assert N.values[0] == 0.0
        assert np.all(N.values >= 0)

    def test_tail(self, solved):
        _, N = solved
        assert N.values[-1] < 1e-8

    def test_mean_by_independent_quadrature(self, solved):
        """int x N = alpha / R; the oracle integrates e^{2u} P(u) on the refined log grid."""
        _, N = solved
        u, P = N.log_solution.upsample(8)
        val = np.trapezoid(np.exp(2 * u) * P, u)
        assert val == pytest.approx(0.7, rel=0.005)
        assert N.mean() == pytest.approx(0.7, rel=0.005)

    @pytest.mark.parametrize("alpha,R", [(1.0, 1.0), (0.5, 2.0)])
    @pytest.mark.parametrize("kernel", [h1(), h2()], ids=["h1", "h2"])
    def test_mean_other_parameters(self, kernel, alpha, R):
        N = solve_stationary(kernel, alpha, R)
        assert N.mass() == pytest.approx(1.0, abs=1e-6)
        assert N.mean() == pytest.approx(alpha / R, rel=0.005)
        assert N.x_max == pytest.approx(12 * alpha / R)

    def test_cdf_consistent(self, solved):
        _, N = solved
        assert N.cdf[0] == 0.0 and N.cdf[-1] == pytest.approx(N.mass(), abs=1e-12)
        assert np.all(np.diff(N.cdf) >= 0)

    def test_eigen_equation_residual(self, kernel_h1, N_h1):
        """alpha N' + 2R N = 2R int N(x/gamma) h(gamma) dgamma/gamma at interior points."""
        # smooth evaluator: trigonometric interpolant of the log-grid solution
        u, P = N_h1.log_solution.upsample(8)
        spline = interpolate.CubicSpline(u, P)
        Nf = lambda x: spline(np.log(x))
        x0 = np.array([0.3, 0.7, 1.2, 2.0])
        lhs = 0.7 * spline(np.log(x0), 1) / x0 + 2 * Nf(x0)
        rhs = []
        for x in x0:
            f = lambda gm: float(Nf(x / gm)) * float(kernel_h1.h(gm)) / gm
            rhs.append(2 * integrate.quad(f, x / 20.0, 1, limit=400)[0])
        assert np.max(np.abs(lhs - np.array(rhs))) < 2e-3

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            solve_stationary(h1(), -0.7, 1.0)
        with pytest.raises(ValueError):
            solve_stationary(h1(), 0.7, 1.0, method="newton")

    def test_non_convergence_reported(self):
        with pytest.raises(ConvergenceError):
            solve_stationary(h1(), max_iter=2)


class TestTimeMarch:
    """The renormalized PDE solver and the evolution operator."""

    def test_grid_refinement(self):
        """Halving dx changes the time-marched N by < 1e-3 in L1."""
        a = solve_stationary(h1(), J=1024, method="time_march")
        b = solve_stationary(h1(), J=2048, method="time_march")
        diff = np.trapezoid(np.abs(b.values[::2] - a.values), a.x_grid)
        assert diff < 1e-3
        assert b.method == "time_march"

    def test_stationary_is_fixed(self, kernel_h1, N_h1):
        """Starting at N, e^{-Rt} n(t) stays within 1e-4 of N in L1 up to t = 5."""
        res = evolve_pde(N_h1.values, kernel_h1, 0.7, 1.0, 5.0, N_h1.x_grid, reference=N_h1)
        assert np.max(res.distance) < 1e-4

    def test_mass_growth(self, kernel_h2):
        x = np.linspace(0, 8.4, 2049)
        n0 = stats.norm.pdf(x, 1.0, 0.2)
        rho = np.trapezoid(n0, x)
        res = evolve_pde(n0, kernel_h2, 0.7, 1.0, 3.0, x)
        rel = res.mass / (rho * np.exp(res.times))
        assert np.max(np.abs(rel - 1)) < 0.01

    def test_relaxation_slope(self, kernel_h1, N_h1):
        x = N_h1.x_grid[::2]
        n0 = stats.norm.pdf(x, 2.0, 0.3)
        res = evolve_pde(n0, kernel_h1, 0.7, 1.0, 5.0, x, reference=N_h1)
        assert relaxation_slope(res, (1.0, 5.0)) <= -0.85

    def test_cfl_rejected(self, kernel_h1):
        x = np.linspace(0, 8.4, 513)
        with pytest.raises(CFLError):
            evolve_pde(np.ones_like(x), kernel_h1, 0.7, 1.0, 1.0, x, dt=2 * (x[1] - x[0]) / 0.7)

    def test_negative_initial_rejected(self, kernel_h1):
        x = np.linspace(0, 8.4, 513)
        with pytest.raises(ValueError):
            evolve_pde(-np.ones_like(x), kernel_h1, 0.7, 1.0, 1.0, x)


class TestSampling:
    """Inverse-CDF draws from N."""

    def test_ks(self, N_h2):
        x = sample_from_N(N_h2, 100_000, np.random.default_rng(0)).values
        d = stats.kstest(x, lambda v: np.interp(v, N_h2.x_grid, N_h2.cdf)).statistic
        assert d < 0.005

    def test_support(self, N_h1):
        x = sample_from_N(N_h1, 50_000, np.random.default_rng(1)).values
        assert np.all(x > 0) and np.all(x <= N_h1.x_max)

    def test_deterministic(self, N_h1):
        a = sample_from_N(N_h1, 100, np.random.default_rng(4)).values
        b = sample_from_N(N_h1, 100, np.random.default_rng(4)).values
        assert np.array_equal(a, b)

    def test_inverse_size_moment(self, N_h2):
        """The mean of 1/X matches int N/x, which is sensitive to the law near the origin."""
        x = sample_from_N(N_h2, 200_000, np.random.default_rng(2)).values
        target = inverse_moments(N_h2, (1,))[1]["value"]
        se = np.std(1 / x) / np.sqrt(x.size)
        assert abs(np.mean(1 / x) - target) < 4 * se


class TestTrueSpectra:
    """Fourier transforms of the solved density."""

    def test_values_at_zero(self, solved):
        _, N = solved
        M, D, F = true_spectra(N, symmetric_xi_grid(5.0, 0.05))
        k0 = M.xi.size // 2
        assert M.values[k0] == pytest.approx(1.0, abs=1e-6)
        assert D.values[k0] == 0.0

    def test_hermitian(self, solved):
        _, N = solved
        for s in true_spectra(N, symmetric_xi_grid(10.0, 0.1)):
            assert s.hermitian_error() < 1e-10

    def test_D_is_minus_i_xi_frakD(self, N_h1):
        M, D, F = true_spectra(N_h1, symmetric_xi_grid(10.0, 0.1))
        assert np.max(np.abs(D.values - (-1j * D.xi) * F.values)) < 1e-14

    def test_M_against_direct_quadrature(self, N_h1):
        """M*(xi) = int N(x) x^{i xi} dx via adaptive quadrature of the interpolated N."""
        M, _, _ = true_spectra(N_h1, np.array([-3.0, 0.0, 3.0]))
        re = integrate.quad(lambda x: float(N_h1(x)) * np.cos(3 * np.log(x)), 1e-12, N_h1.x_max, limit=800)[0]
        im = integrate.quad(lambda x: float(N_h1(x)) * np.sin(3 * np.log(x)), 1e-12, N_h1.x_max, limit=800)[0]
        assert abs(M.values[2] - complex(re, im)) < 1e-5

    def test_identity_matches_g_star(self, solved):
        kernel, N = solved
        xi = symmetric_xi_grid(20.0, 0.05)
        M, D, _ = true_spectra(N, xi)
        lhs = identity_gstar(M, D, 0.7, 1.0)
        assert np.max(np.abs(lhs.values - kernel.g_star(xi))) < 1e-4

    def test_asymmetric_grid_rejected(self, N_h1):
        with pytest.raises(ValueError):
            true_spectra(N_h1, np.array([0.0, 1.0, 2.0]))


class TestDiagnostics:
    """Zeros, decay and inverse moments of M*."""

    def test_min_abs_M_positive_and_stable(self, N_h1):
        a = spectral_diagnostics(N_h1, 30.0, 0.05)
        b = spectral_diagnostics(N_h1, 30.0, 0.025)
        assert a["min_abs_M"] > 0
        assert abs(a["min_abs_M"] - b["min_abs_M"]) / b["min_abs_M"] < 0.01

    def test_decay(self, N_h1):
        d = spectral_diagnostics(N_h1, 30.0)
        assert d["decay_slope"] < 0
        M, _, _ = true_spectra(N_h1, symmetric_xi_grid(30.0, 0.05))
        assert abs(M.values[-1]) < 1e-3 * abs(M.values[M.xi.size // 2])

    def test_inverse_moments_finite(self, solved):
        _, N = solved
        mom = inverse_moments(N, (1, 2, 3, 4))
        assert mom[1]["finite"] and mom[1]["rel_change"] < 0.01


class TestSpectrumGrid:
    """The symmetric-grid container."""

    def test_grid_construction(self):
        xi = symmetric_xi_grid(1.0, 0.25)
        assert np.allclose(xi, [-1, -0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75, 1])
        with pytest.raises(ValueError):
            symmetric_xi_grid(1.0, 0.3)

    def test_mismatch(self):
        a = SpectrumGrid(symmetric_xi_grid(1.0, 0.25), np.ones(9))
        b = SpectrumGrid(symmetric_xi_grid(1.0, 0.5), np.ones(5))
        with pytest.raises(GridMismatchError):
            a + b

    def test_restrict(self):
        a = SpectrumGrid(symmetric_xi_grid(1.0, 0.25), np.ones(9)).restrict(0.5)
        assert np.array_equal(a.values.real, [0, 0, 1, 1, 1, 1, 1, 0, 0])
