"""Stream determinism, Gaussian density facts, and fractional path normalisation."""

import numpy as np
import pytest

from lsvmc.stochastic import (
    IncrementBlock,
    NoiseLabel,
    RandomStreamSpec,
    TimeGrid,
    correlate,
    draw_increments,
    gaussian_pdf,
    log_gaussian_pdf,
    normal_for,
    rl_fbm_path,
    rl_fbm_weights,
)


class TestTimeGrid:
    def test_integer_ratio_required(self):
        with pytest.raises(ValueError):
            TimeGrid(T=1.0, h=0.3)

    def test_h_above_one_rejected(self):
        with pytest.raises(ValueError):
            TimeGrid(T=2.0, h=2.0)

    def test_coarsest_point_admitted(self):
        assert TimeGrid(T=1.0, h=1.0).n_steps == 1

    def test_steps_and_times(self):
        grid = TimeGrid(T=1.0, h=0.02)
        assert grid.n_steps == 50
        assert grid.times()[0] == 0.0
        assert grid.times()[-1] == pytest.approx(1.0)


class TestGaussianPdf:
    def test_standard_at_zero(self):
        assert gaussian_pdf(0.0, 1.0) == pytest.approx(0.3989422804014327, rel=1e-12)

    def test_scaling_identity(self):
        # phi_lam(x) = phi_1(x / sqrt(lam)) / sqrt(lam)
        for lam in (1e-6, 1e-4, 0.3, 2e-1):
            for x in (-0.5, 0.0, 1e-3, 0.02, 1.7):
                expected = gaussian_pdf(x / np.sqrt(lam), 1.0) / np.sqrt(lam)
                assert gaussian_pdf(x, lam) == pytest.approx(expected, rel=1e-12)

    def test_small_lambda_value(self):
        # direct formula evaluated with 40-digit arithmetic
        assert gaussian_pdf(0.02, 1e-4) == pytest.approx(5.39909665131881, rel=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            gaussian_pdf(0.0, 0.0)
        with pytest.raises(ValueError):
            log_gaussian_pdf(1.0, -1.0)

    def test_gaussian_density_inequalities(self):
        # three centered-Gaussian inequalities on a dense grid, 1e-12 relative
        xs = np.round(np.arange(-10.0, 10.0 + 1e-9, 0.1), 10)
        eps = 0.05
        for lam in (1e-4, 1e-2, 1.0):
            phi = gaussian_pdf(xs, lam)
            for gamma in (0.1, 0.5, 1.0):
                lhs = np.abs(xs) * phi
                rhs = (np.e * gamma) ** -0.5 * lam ** ((1 - gamma) / 2) * phi ** (1 - gamma)
                assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-300)

                ys = xs + 0.8 * eps  # |x - y| < eps
                rhs2 = (2 * np.pi * lam) ** (gamma / 2) * phi ** (1 + gamma) * np.exp(-(eps**2) / (gamma * lam))
                assert np.all(gaussian_pdf(ys, lam) >= rhs2 * (1 - 1e-12))

                lhs3 = phi ** (1 + gamma)
                rhs3 = (2 * np.pi * lam) ** (-gamma / 2) * phi
                assert np.all(lhs3 <= rhs3 * (1 + 1e-12) + 1e-300)


class TestStreams:
    def test_blocks_bit_identical(self):
        grid = TimeGrid(T=1.0, h=0.1)
        a = draw_increments(grid, 100, seed=7, noise_label=NoiseLabel.B)
        b = draw_increments(grid, 100, seed=7, noise_label=NoiseLabel.B)
        assert isinstance(a, IncrementBlock)
        assert np.array_equal(a.values, b.values)

    def test_purity_under_shape_changes(self):
        # entry (i, j) is a pure function of the stream tuple, not the block shape
        grid_long = TimeGrid(T=1.0, h=0.1)
        grid_short = TimeGrid(T=0.5, h=0.1)
        full = draw_increments(grid_long, 64, seed=3, noise_label=NoiseLabel.Z).values
        fewer_rows = draw_increments(grid_long, 16, seed=3, noise_label=NoiseLabel.Z).values
        fewer_cols = draw_increments(grid_short, 64, seed=3, noise_label=NoiseLabel.Z).values
        offset = draw_increments(grid_long, 32, seed=3, noise_label=NoiseLabel.Z, first_particle=32).values
        assert np.array_equal(full[:16], fewer_rows)
        assert np.array_equal(full[:, :5], fewer_cols)
        assert np.array_equal(full[32:], offset)

    def test_normal_for_matches_block(self):
        grid = TimeGrid(T=1.0, h=0.25)
        block = draw_increments(grid, 8, seed=11, noise_label=NoiseLabel.BBAR).values
        spec = RandomStreamSpec(seed=11, particle_id=5, noise_label=NoiseLabel.BBAR, step=2)
        assert block[5, 2] == pytest.approx(np.sqrt(grid.h) * normal_for(spec), abs=0.0)

    def test_labels_uncorrelated(self):
        grid = TimeGrid(T=0.1, h=0.1)
        n = 100_000
        a = draw_increments(grid, n, seed=9, noise_label=NoiseLabel.B).values[:, 0]
        b = draw_increments(grid, n, seed=9, noise_label=NoiseLabel.BBAR).values[:, 0]
        corr = float(np.corrcoef(a, b)[0, 1])
        assert abs(corr) < 5 / np.sqrt(n)

    def test_column_variance(self):
        grid = TimeGrid(T=0.03, h=0.01)
        n = 100_000
        vals = draw_increments(grid, n, seed=21, noise_label=NoiseLabel.B).values
        stderr = 0.01 * np.sqrt(2.0 / n)
        for col in range(grid.n_steps):
            assert abs(np.var(vals[:, col], ddof=1) - 0.01) < 5 * stderr

    def test_mean_near_zero(self):
        grid = TimeGrid(T=0.01, h=0.01)
        n = 100_000
        vals = draw_increments(grid, n, seed=4, noise_label=NoiseLabel.HDRIVER).values[:, 0]
        assert abs(np.mean(vals)) < 5 * np.sqrt(0.01 / n)

    def test_n_paths_validation(self):
        with pytest.raises(ValueError):
            draw_increments(TimeGrid(T=1.0, h=0.5), 0, seed=1, noise_label=NoiseLabel.B)


class TestCorrelate:
    def test_rho_zero_returns_second(self):
        x = np.array([1.0, -2.0])
        y = np.array([0.5, 0.25])
        assert np.array_equal(correlate(x, y, 0.0), y)

    def test_rho_near_one_approaches_first(self):
        x, y = 1.0, -1.0
        out = correlate(x, y, 1.0 - 1e-9)
        assert abs(out - x) < 1e-4

    def test_full_correlation_rejected(self):
        with pytest.raises(ValueError):
            correlate(1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            correlate(1.0, 1.0, -1.5)

    def test_variance_preserved(self):
        grid = TimeGrid(T=0.01, h=0.01)
        n = 100_000
        a = draw_increments(grid, n, seed=2, noise_label=NoiseLabel.B).values[:, 0]
        b = draw_increments(grid, n, seed=2, noise_label=NoiseLabel.BBAR).values[:, 0]
        out = correlate(a, b, -0.7)
        stderr = 0.01 * np.sqrt(2.0 / n)
        assert abs(np.var(out, ddof=1) - 0.01) < 5 * stderr


class TestFractionalPath:
    def test_half_recovers_brownian(self):
        grid = TimeGrid(T=1.0, h=0.05)
        rng = np.random.default_rng(0)
        drv = rng.normal(0, np.sqrt(grid.h), grid.n_steps)
        path = rl_fbm_path(0.5, grid, drv)
        expected = np.concatenate(([0.0], np.cumsum(drv)))
        assert np.allclose(path, expected, rtol=1e-12, atol=1e-15)

    def test_variance_normalisation_exact(self):
        # discrete variance telescopes to t_k^(2H) by construction
        grid = TimeGrid(T=1.0, h=0.02)
        t = grid.times()[1:]
        for H in (0.1, 0.3, 0.5):
            w = rl_fbm_weights(H, grid.n_steps, grid.h)
            var = np.cumsum(w * w) * grid.h
            assert np.max(np.abs(var / t ** (2 * H) - 1.0)) < 1e-12

    def test_normalising_constant(self):
        # first-cell weight equals sqrt(2H) * sqrt(int_0^h (h-s)^(2H-1) ds / h)
        H = 0.1
        h = 0.01
        w = rl_fbm_weights(H, 1, h)
        c_h = np.sqrt(2 * H)
        kernel_cell = np.sqrt((h ** (2 * H) / (2 * H)) / h)
        assert w[0] == pytest.approx(c_h * kernel_cell, rel=1e-12)
        assert c_h == pytest.approx(0.4472135954999579, rel=1e-12)

    def test_terminal_variance_monte_carlo(self):
        grid = TimeGrid(T=1.0, h=0.1)
        n = 100_000
        drv = draw_increments(grid, n, seed=31, noise_label=NoiseLabel.HDRIVER).values
        paths = rl_fbm_path(0.1, grid, drv)
        var = np.var(paths[:, -1], ddof=1)
        stderr = 1.0 * np.sqrt(2.0 / n)
        assert abs(var - 1.0) < 5 * stderr

    def test_hurst_domain(self):
        with pytest.raises(ValueError):
            rl_fbm_weights(0.0, 10, 0.1)
        with pytest.raises(ValueError):
            rl_fbm_weights(1.0, 10, 0.1)

    def test_driver_length_checked(self):
        grid = TimeGrid(T=1.0, h=0.5)
        with pytest.raises(ValueError):
            rl_fbm_path(0.3, grid, np.zeros(5))
