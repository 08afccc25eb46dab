"""Empirical spectra, truncated inversion, sinc smoothing and reconstruction."""
from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from fragdeconv.estimator import (
    ConfigError,
    EstimatorConfig,
    HermitianError,
    SizeSample,
    default_x_grid,
    empirical_D_star,
    empirical_frakD_star,
    empirical_M_star,
    estimate,
    g_hat_star,
    h_hat,
    invert_to_g,
    leakage_mass,
    symmetrize,
    truncated_inverse,
)
from fragdeconv.spectrum import GridMismatchError, SpectrumGrid, symmetric_xi_grid
from fragdeconv.stationary import sample_from_N, true_spectra

XI = symmetric_xi_grid(20.0, 0.05)


class TestSizeSample:
    """Validation and cached logarithms."""

    def test_logs_consistent(self, rng):
        x = rng.uniform(0.1, 3.0, 100)
        s = SizeSample(x)
        assert np.max(np.abs(s.log_values - np.log(x))) < 1e-12
        assert s.n == len(s) == 100

    def test_rejects_nonpositive(self):
        for bad in ([1.0, 0.0], [1.0, -2.0], [np.nan], []):
            with pytest.raises(ValueError):
                SizeSample(np.array(bad, dtype=float))

    def test_subset(self):
        s = SizeSample(np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.array_equal(s.subset([1, 3]).values, [2.0, 4.0])


class TestEmpiricalSpectra:
    """Empirical Mellin-type transforms of the sample."""

    def test_M_at_zero_is_one(self, rng):
        s = SizeSample(rng.lognormal(size=257))
        M = empirical_M_star(s, XI)
        assert M.values[XI.size // 2] == 1.0

    def test_single_unit_observation(self):
        s = SizeSample(np.array([1.0]))
        M = empirical_M_star(s, XI)
        D = empirical_D_star(s, XI)
        assert np.max(np.abs(M.values - 1.0)) < 1e-15
        assert np.max(np.abs(D.values - (-1j * XI))) < 1e-15

    def test_D_at_zero_is_zero(self, rng):
        s = SizeSample(rng.lognormal(size=50))
        assert empirical_D_star(s, XI).values[XI.size // 2] == 0.0

    def test_frakD_at_zero_is_mean_inverse(self, rng):
        x = rng.uniform(0.2, 2.0, 300)
        fd = empirical_frakD_star(SizeSample(x), XI)
        assert fd.values[XI.size // 2] == pytest.approx(np.mean(1.0 / x), rel=1e-13)

    def test_D_is_minus_i_xi_frakD(self, rng):
        s = SizeSample(rng.lognormal(size=1000))
        D = empirical_D_star(s, XI)
        fd = empirical_frakD_star(s, XI)
        assert np.max(np.abs(D.values - (-1j * XI) * fd.values)) < 1e-12

    def test_matches_direct_sum(self, rng):
        """Chunked evaluation equals a naive double loop."""
        x = rng.uniform(0.1, 3.0, 5000)
        xi = symmetric_xi_grid(2.0, 0.5)
        M = empirical_M_star(SizeSample(x), xi)
        naive = np.array([np.mean(x ** (1j * k)) for k in xi])
        assert np.max(np.abs(M.values - naive)) < 1e-12

    def test_hermitian(self, rng):
        s = SizeSample(rng.lognormal(size=300))
        assert empirical_M_star(s, XI).hermitian_error() == 0.0
        assert empirical_D_star(s, XI).hermitian_error() == 0.0

    def test_M_sup_error(self, N_h1, rng):
        """n = 1e5 from N: sup |M̂* - M*| < 0.02."""
        s = sample_from_N(N_h1, 100_000, rng)
        M, _, _ = true_spectra(N_h1, XI)
        assert np.max(np.abs(empirical_M_star(s, XI).values - M.values)) < 0.02

    def test_frakD_sup_error(self, N_h1, rng):
        """n = 3e4 from N: sup |frakD̂* - frakD*| < 0.02."""
        s = sample_from_N(N_h1, 30_000, rng)
        _, _, fd = true_spectra(N_h1, XI)
        assert np.max(np.abs(empirical_frakD_star(s, XI).values - fd.values)) < 0.02

    def test_D_fluctuates_more_than_frakD(self, N_h1, rng):
        """The -i xi factor inflates the error of D̂* at large xi."""
        s = sample_from_N(N_h1, 30_000, rng)
        _, D, fd = true_spectra(N_h1, XI)
        err_fd = np.max(np.abs(empirical_frakD_star(s, XI).values - fd.values))
        err_D = np.max(np.abs(empirical_D_star(s, XI).values - D.values))
        assert err_D > 5 * err_fd

    def test_unbiased(self, N_h2):
        """Means over 500 samples of size 200 are within 3 standard errors of the truth."""
        rng = np.random.default_rng(7)
        grid = symmetric_xi_grid(9.0, 1.0)
        M, D, _ = true_spectra(N_h2, grid)
        reps = 500
        Ms = np.empty((reps, grid.size), dtype=complex)
        Ds = np.empty_like(Ms)
        for r in range(reps):
            s = sample_from_N(N_h2, 200, rng)
            Ms[r] = empirical_M_star(s, grid).values
            Ds[r] = empirical_D_star(s, grid).values
        pick = np.flatnonzero(grid > 0)[:10]
        for est, true in ((Ms, M.values), (Ds, D.values)):
            mean = est[:, pick].mean(axis=0)
            se = np.sqrt(np.mean(np.abs(est[:, pick] - mean) ** 2, axis=0) / reps)
            assert np.all(np.abs(mean - true[pick]) <= 3 * se)


class TestTruncatedInverse:
    """Inverse of M̂* kept only where its modulus reaches n^{-1/2}."""

    def _grid(self, vals):
        xi = np.array([-1.0, 0.0, 1.0])
        return SpectrumGrid(xi, np.asarray(vals, dtype=complex))

    def test_unit_modulus(self):
        out = truncated_inverse(self._grid([1.0, 1.0, 1.0]), 100)
        assert np.all(out.values == 1.0)

    def test_below_threshold_zeroed(self):
        n = 400
        v = 0.5 * n ** -0.5
        out = truncated_inverse(self._grid([v, 1.0, v]), n)
        assert out.values[0] == 0.0 and out.values[2] == 0.0

    def test_boundary_included(self):
        n = 64
        v = 0.125j  # modulus exactly 64^{-1/2}
        out = truncated_inverse(self._grid([np.conj(v), 1.0, v]), n)
        assert out.values[2] == pytest.approx(1.0 / v, rel=1e-15)


class TestGHatStar:
    """Smoothed plug-in estimate of g*."""

    def test_zero_beyond_cutoff_and_one_at_zero(self, rng, N_h1):
        cfg = EstimatorConfig(ell=0.25, xi_max=20.0)
        xi = cfg.xi_grid()
        s = sample_from_N(N_h1, 2000, rng)
        gs = g_hat_star(cfg, empirical_M_star(s, xi), empirical_D_star(s, xi), s.n)
        assert np.all(gs.values[np.abs(xi) > 4.0 + 1e-9] == 0.0)
        assert gs.values[xi.size // 2] == 1.0

    def test_oracle_mode(self, N_h1, kernel_h1):
        """True spectra give K*(ell xi) g*(xi) within 1e-4."""
        cfg = EstimatorConfig(ell=0.1, xi_max=20.0)
        xi = cfg.xi_grid()
        M, D, _ = true_spectra(N_h1, xi)
        gs = g_hat_star(cfg, M, D, None)
        target = np.where(np.abs(xi) <= 10.0 + 1e-9, kernel_h1.g_star(xi), 0.0)
        assert np.max(np.abs(gs.values - target)) < 1e-4

    def test_grid_mismatch(self):
        cfg = EstimatorConfig(ell=0.5, xi_max=5.0)
        a = SpectrumGrid(symmetric_xi_grid(5.0, 0.05), np.ones(201))
        b = SpectrumGrid(symmetric_xi_grid(5.0, 0.1), np.ones(101))
        with pytest.raises(GridMismatchError):
            g_hat_star(cfg, a, b, 10)

    def test_cutoff_outside_grid(self):
        cfg = EstimatorConfig(ell=0.1, xi_max=20.0)
        a = SpectrumGrid(symmetric_xi_grid(5.0, 0.05), np.ones(201))
        with pytest.raises(ConfigError):
            g_hat_star(cfg, a, a, 10)


class TestConfig:
    """Estimator configuration checks."""

    def test_cutoff_must_fit(self):
        with pytest.raises(ConfigError):
            EstimatorConfig(ell=0.01, xi_max=50.0)

    def test_nonpositive_values(self):
        for kw in ({"ell": 0.0}, {"alpha": -1.0}, {"rate_R": 0.0}, {"u_min": -5.0}):
            with pytest.raises(ConfigError):
                EstimatorConfig(**kw)

    def test_cutoff_is_grid_node(self):
        for ell in (0.3, 0.07, 1.3):
            xi = EstimatorConfig(ell=ell).xi_grid()
            assert np.min(np.abs(xi - 1.0 / ell)) < 1e-12


class TestInversion:
    """Inverse Fourier transform back to the log-scale density."""

    def test_zero_spectrum(self):
        gs = SpectrumGrid(XI, np.zeros(XI.size))
        assert np.all(invert_to_g(gs, np.linspace(-12, 0, 100), 5.0) == 0.0)

    def test_non_hermitian_rejected(self):
        vals = np.ones(XI.size, dtype=complex)
        vals[-1] = 1j
        with pytest.raises(HermitianError):
            invert_to_g(SpectrumGrid(XI, vals), np.linspace(-12, 0, 10))

    def test_gaussian_transform(self):
        """The transform e^{-xi^2/2} inverts to the standard normal density."""
        xi = symmetric_xi_grid(40.0, 0.01)
        u = np.linspace(-4, 4, 81)
        g = invert_to_g(SpectrumGrid(xi, np.exp(-xi ** 2 / 2)), u)
        assert np.max(np.abs(g - np.exp(-u ** 2 / 2) / np.sqrt(2 * np.pi))) < 1e-12

    def test_oracle_bias_matches_parseval(self, kernel_h1):
        """||K_ell * g - g||^2 equals (1/2pi) int_{|xi|>1/ell} |g*|^2 within 1e-3."""
        ell = 0.1
        cfg = EstimatorConfig(ell=ell, xi_max=20.0)
        xi = cfg.xi_grid()
        gs = SpectrumGrid(xi, np.where(np.abs(xi) <= 10.0 + 1e-9, kernel_h1.g_star(xi), 0.0))
        # the smoothed density leaks onto u > 0, so integrate over a wide window
        u = np.linspace(-30.0, 30.0, 24001)
        ghat = invert_to_g(gs, u, cfg.cutoff)
        bias = np.trapezoid((ghat - kernel_h1.g(u)) ** 2, u)
        tail = integrate.quad(lambda t: abs(kernel_h1.g_star(np.array([t]))[0]) ** 2, 10.0, np.inf,
                              limit=400)[0]
        assert bias == pytest.approx(tail / np.pi, abs=1e-3)

    def test_leakage_zero_for_zero_spectrum(self):
        assert leakage_mass(SpectrumGrid(XI, np.zeros(XI.size)), 5.0) == 0.0

    def test_leakage_positive_for_smoothed_density(self, kernel_h1):
        gs = SpectrumGrid(XI, np.where(np.abs(XI) <= 3.0, kernel_h1.g_star(XI), 0.0))
        assert leakage_mass(gs, 3.0) > 0.0


class TestReconstruction:
    """Back to the division kernel on (0, 1) and its symmetrization."""

    def test_zero_input(self):
        u = np.linspace(-12, 0, 2048)
        assert np.all(h_hat(np.zeros(u.size), u, default_x_grid()) == 0.0)

    def test_exact_at_nodes(self, rng):
        u = np.linspace(-12, 0, 2048)
        g = rng.normal(size=u.size)
        idx = np.array([100, 1000, 2000])
        x = np.exp(u[idx])
        assert np.allclose(h_hat(g, u, x), g[idx] / x, rtol=1e-12, atol=0)

    def test_rejects_outside_unit_interval(self):
        u = np.linspace(-12, 0, 10)
        for bad in (0.0, 1.0, -0.3, 1.5):
            with pytest.raises(ValueError):
                h_hat(np.zeros(10), u, np.array([0.5, bad]))

    def test_oracle_sup_error_decreases(self, kernel_h1):
        """Bias-only estimates of h1 improve as ell decreases."""
        x = default_x_grid()
        band = (x >= 0.1) & (x <= 0.9)
        errs = []
        for ell in (0.5, 0.2, 0.1, 0.05):
            cfg = EstimatorConfig(ell=ell, xi_max=20.0)
            xi = cfg.xi_grid()
            gs = SpectrumGrid(xi, np.where(np.abs(xi) <= cfg.cutoff + 1e-9, kernel_h1.g_star(xi), 0.0))
            u = cfg.u_grid()
            hh = h_hat(invert_to_g(gs, u, cfg.cutoff), u, x)
            errs.append(np.max(np.abs(hh - kernel_h1.h(x))[band]))
        assert np.all(np.diff(errs) < 0)

    def test_symmetrize_idempotent(self):
        x = default_x_grid(99)
        f = np.exp(x)
        h = f + f[::-1]
        assert np.array_equal(symmetrize(h, x), h)

    def test_symmetrize_pairs(self):
        x = default_x_grid(9)
        h = np.zeros(9)
        h[1], h[7] = 3.0, 1.0
        out = symmetrize(h, x)
        assert out[1] == out[7] == 2.0
        assert np.array_equal(out, out[::-1])

    def test_symmetrize_rejects_asymmetric_grid(self):
        x = np.linspace(0.1, 0.8, 8)
        with pytest.raises(ValueError):
            symmetrize(np.ones(8), x)


class TestEstimatePipeline:
    """End-to-end estimate from a sample."""

    def test_reasonable_risk(self, N_h1, kernel_h1, rng):
        s = sample_from_N(N_h1, 30_000, rng)
        est = estimate(s, EstimatorConfig(ell=0.3))
        risk = np.trapezoid((est.g_hat - kernel_h1.g(est.u_grid)) ** 2, est.u_grid)
        assert risk < 0.2
        assert np.array_equal(est.h_hat_sym, est.h_hat_sym[::-1])
        assert est.leakage >= 0.0
