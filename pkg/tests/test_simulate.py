"""Exact event-driven population simulation."""
from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from fragdeconv.kernels import h1, h2
from fragdeconv.simulate import (
    PopulationOverflowError,
    PopulationSnapshot,
    SimConfig,
    TrackingError,
    advance,
    division_log,
    expected_count,
    expected_total_size,
    init_population,
    measure,
    sample_sizes,
    split_size,
)
from fragdeconv.stationary import sample_from_N

CFG = SimConfig(0.7, 1.0, h1())


class TestInitPopulation:
    """Initial snapshots from explicit sizes or samplers."""

    def test_single_cell(self):
        s = init_population(1, [1.0])
        assert s.count == 1 and s.sizes[0] == 1.0 and s.time == 0.0 and s.scaling_K == 1

    def test_zero_K_rejected(self):
        with pytest.raises(ValueError):
            init_population(0, [1.0])

    def test_nonpositive_size_rejected(self):
        with pytest.raises(ValueError):
            init_population(1, [1.0, 0.0])
        with pytest.raises(ValueError):
            init_population(1, [-2.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            init_population(1, [])

    def test_sampler_from_stationary_density(self, N_h1):
        """K=100 draws from N pass a KS test against N's CDF."""
        rng = np.random.default_rng(5)
        s = init_population(100, lambda r, m: sample_from_N(N_h1, m, r).values, rng)
        assert s.count == 100
        p = stats.kstest(s.sizes, lambda x: np.interp(x, N_h1.x_grid, N_h1.cdf)).pvalue
        assert p > 1e-3

    def test_labels(self):
        s = init_population(3, [1.0, 2.0, 3.0], labels=True)
        assert s.labels == ("0", "1", "2")


class TestAdvance:
    """Gillespie dynamics."""

    def test_no_time_no_change(self):
        s = init_population(2, [0.5, 1.5])
        out = advance(s, CFG, 0.0, np.random.default_rng(0))
        assert np.array_equal(out.sizes, s.sizes) and out.time == 0.0

    def test_backwards_rejected(self):
        s = init_population(1, [1.0])
        s = advance(s, CFG, 1.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            advance(s, CFG, 0.5, np.random.default_rng(0))

    def test_growth_only_without_division(self):
        """Over an interval with no division event every size grows by alpha * dt."""
        s = init_population(1, [1.0])
        for seed in range(50):
            rng = np.random.default_rng(seed)
            out = advance(s, CFG, 0.05, rng)
            if out.count == 1:
                assert out.sizes[0] == pytest.approx(1.0 + 0.7 * 0.05, abs=1e-14)
                return
        pytest.fail("no division-free run found")

    def test_bit_reproducible(self):
        s = init_population(10, np.linspace(0.5, 1.5, 10))
        a = advance(s, CFG, 2.5, np.random.default_rng(11))
        b = advance(s, CFG, 2.5, np.random.default_rng(11))
        assert np.array_equal(a.sizes, b.sizes)

    def test_count_grows_by_one_per_division(self):
        cfg = SimConfig(0.7, 1.0, h1(), track_divisions=True)
        s = init_population(5, np.ones(5))
        out = advance(s, cfg, 2.0, np.random.default_rng(1))
        assert out.count == 5 + division_log(out).shape[0]

    def test_restart_equals_single_run_in_law(self):
        """Advancing in two legs keeps the clock and cell count consistent."""
        s = init_population(5, np.ones(5))
        rng = np.random.default_rng(4)
        mid = advance(s, CFG, 1.0, rng)
        end = advance(mid, CFG, 2.0, rng)
        assert end.time == 2.0 and end.count >= mid.count

    def test_overflow(self):
        cfg = SimConfig(0.7, 1.0, h1(), max_cells=50)
        s = init_population(10, np.ones(10))
        with pytest.raises(PopulationOverflowError):
            advance(s, cfg, 10.0, np.random.default_rng(0))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SimConfig(0.0, 1.0, h1())
        with pytest.raises(ValueError):
            SimConfig(0.7, -1.0, h1())


class TestMoments:
    """Mean cell count and total size against the moment equations."""

    def test_count_and_total_size(self):
        K, t, reps = 1000, 2.0, 60
        counts, totals = [], []
        for r in range(reps):
            rng = np.random.default_rng([7, r])
            s = init_population(K, np.ones(K))
            out = advance(s, CFG, t, rng)
            counts.append(measure(out, lambda x: 1.0))
            totals.append(measure(out, lambda x: x))
        assert np.mean(counts) == pytest.approx(expected_count(1.0, 1.0, t), rel=0.02)
        assert np.mean(totals) == pytest.approx(expected_total_size(1.0, 1.0, 0.7, 1.0, t), rel=0.02)


class TestSizeConservation:
    """Divisions conserve size exactly."""

    def test_split_size_exact(self):
        rng = np.random.default_rng(0)
        for x, g in zip(rng.uniform(0.01, 100, 10000), rng.uniform(0, 1, 10000)):
            a, b = split_size(x, g)
            assert a + b == x and a >= 0 and b >= 0

    def test_total_size_bookkeeping(self):
        """Sum of sizes equals initial size plus alpha times the integrated cell count."""
        cfg = SimConfig(0.7, 1.0, h2(), track_divisions=True)
        s = init_population(20, np.linspace(0.5, 1.5, 20))
        out = advance(s, cfg, 3.0, np.random.default_rng(2))
        log = division_log(out)
        expected = s.sizes.sum() + 0.7 * (20 * 3.0 + np.sum(3.0 - log[:, 0]))
        assert out.sizes.sum() == pytest.approx(expected, rel=1e-12)


class TestLabels:
    """Genealogical labels."""

    def test_unique_and_prefix_consistent(self):
        cfg = SimConfig(0.7, 1.0, h1(), track_labels=True, track_divisions=True)
        s = init_population(3, np.ones(3), labels=True)
        out = advance(s, cfg, 3.0, np.random.default_rng(8))
        labels = out.labels
        assert len(set(labels)) == len(labels) == out.count
        leaves = set(labels)
        for lab in labels:
            root, _, path = lab.partition(".")
            assert root in {"0", "1", "2"}
            assert set(path) <= {"0", "1"}
            # the sibling subtree must exist: each internal node has two children
            if path:
                sib = root + "." + path[:-1] + ("1" if path[-1] == "0" else "0")
                assert any(l == sib or l.startswith(sib) for l in leaves)
        n_div = division_log(out).shape[0]
        assert sum(len(l.partition(".")[2]) for l in labels) >= n_div


class TestMeasure:
    """Integration against the renormalized empirical measure."""

    def test_constant(self):
        s = PopulationSnapshot(0.0, 2, np.array([0.3, 0.6, 0.9]))
        assert measure(s, lambda x: 1.0) == pytest.approx(1.5)

    def test_identity(self):
        s = PopulationSnapshot(0.0, 1, np.array([0.5, 0.7]))
        assert measure(s, lambda x: x) == pytest.approx(1.2)

    def test_indicator(self):
        s = PopulationSnapshot(0.0, 4, np.array([0.5, 0.9, 1.5, 2.0]))
        assert measure(s, lambda x: (x <= 1.0).astype(float)) == pytest.approx(0.5)


class TestSampling:
    """Picking cells from a snapshot."""

    def test_single_cell(self):
        s = init_population(1, [2.5])
        assert np.all(sample_sizes(s, 5, np.random.default_rng(0)).values == 2.5)

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            sample_sizes(init_population(1, [1.0]), 0, np.random.default_rng(0))

    def test_large_time_matches_stationary(self, N_h1):
        """Cells picked after a long run follow N (KS distance < 0.05)."""
        rng = np.random.default_rng(3)
        s = init_population(200, np.ones(200))
        out = advance(s, CFG, 6.0, rng)
        x = sample_sizes(out, 10_000, rng).values
        d = stats.kstest(x, lambda v: np.interp(v, N_h1.x_grid, N_h1.cdf)).statistic
        assert d < 0.05


class TestDivisionLog:
    """Recorded division events."""

    def test_disabled(self):
        out = advance(init_population(1, [1.0]), CFG, 1.0, np.random.default_rng(0))
        with pytest.raises(TrackingError):
            division_log(out)

    def test_empty_run(self):
        cfg = SimConfig(0.7, 1.0, h1(), track_divisions=True)
        out = advance(init_population(1, [1.0]), cfg, 0.0, np.random.default_rng(0))
        assert division_log(out).shape == (0, 3)

    def test_gamma_law(self):
        """Logged fractions follow h (KS < 0.02 with >= 10^4 divisions)."""
        cfg = SimConfig(0.7, 1.0, h2(), track_divisions=True)
        out = advance(init_population(100, np.ones(100)), cfg, 4.7, np.random.default_rng(6))
        g = division_log(out)[:, 2]
        assert g.size >= 10_000
        assert stats.kstest(g, lambda x: h2().cdf(x)).statistic < 0.02

    def test_times_ordered_and_sizes_positive(self):
        cfg = SimConfig(0.7, 1.0, h1(), track_divisions=True)
        out = advance(init_population(5, np.ones(5)), cfg, 2.0, np.random.default_rng(1))
        log = division_log(out)
        assert np.all(np.diff(log[:, 0]) >= 0) and np.all(log[:, 1] > 0)
