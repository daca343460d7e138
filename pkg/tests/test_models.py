"""Volatility specs, scheme constants, and xi-path adaptedness."""

import numpy as np
import pytest

from lsvmc.models import (
    LocalVolSpec,
    SchemeParams,
    StochVolSpec,
    c_min_from_bounds,
    lambda_of,
    sigma_eval,
    two_state_vol,
    xi_path,
)
from lsvmc.stochastic import NoiseLabel, TimeGrid, draw_increments


class TestCMin:
    def test_formula(self):
        assert c_min_from_bounds(0.5, 2.0, 1.0) == pytest.approx(0.125)
        assert c_min_from_bounds(1.0, 1.0, 1.0) == pytest.approx(0.5)

    def test_domain(self):
        with pytest.raises(ValueError):
            c_min_from_bounds(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            c_min_from_bounds(2.0, 1.0, 1.0)  # a > b
        with pytest.raises(ValueError):
            c_min_from_bounds(0.5, 1.0, -1.0)


class TestLambda:
    def test_values(self):
        assert lambda_of(0.05, -0.7, 0.02) == pytest.approx(2.55e-5, rel=1e-12)
        assert lambda_of(0.05, -0.7, 1 / 50) == pytest.approx(2.55e-5, rel=1e-12)
        assert lambda_of(0.3, 0.0, 0.1) == pytest.approx(0.3**2 * 0.1, rel=1e-14)

    def test_assumption_violation(self):
        with pytest.raises(ValueError):
            lambda_of(0.05, 1.0, 0.02)

    def test_monotonicity(self):
        base = lambda_of(0.05, -0.7, 0.02)
        assert lambda_of(0.05, -0.7, 0.04) > base          # increasing in h
        assert lambda_of(0.06, -0.7, 0.02) > base          # increasing in c_min
        assert lambda_of(0.05, -0.9, 0.02) < base          # decreasing in |rho|
        assert lambda_of(0.05, 0.7, 0.02) == pytest.approx(base)


class TestLocalVol:
    def test_tanh_values(self):
        spec = LocalVolSpec(variant="tanh")
        assert sigma_eval(spec, 0.0, 0.0) == pytest.approx(0.75)
        # 3/4 + tanh(10)/4 from a 40-digit evaluation
        assert sigma_eval(spec, 0.0, 10.0) == pytest.approx(0.999999998969423, rel=1e-12)

    def test_tanh_ellipticity_on_dense_grid(self):
        spec = LocalVolSpec(variant="tanh")
        xs = np.linspace(-50, 50, 5001)
        for t in np.linspace(0, 1, 11):
            vals = sigma_eval(spec, t, xs)
            assert vals.min() >= 0.5 and vals.max() <= 1.0

    def test_constant(self):
        spec = LocalVolSpec(variant="constant", value=1.0)
        assert sigma_eval(spec, 0.3, 123.4) == 1.0
        assert spec.c == spec.C == 1.0

    def test_table_interpolation_and_extrapolation(self):
        spec = LocalVolSpec(
            variant="user_table",
            lower=0.5, upper=2.0,
            t_knots=np.array([0.0, 0.5]),
            x_knots=np.array([-1.0, 0.0, 1.0]),
            table=np.array([[0.5, 1.0, 2.0], [1.0, 1.5, 2.0]]),
        )
        assert sigma_eval(spec, 0.0, -0.5) == pytest.approx(0.75)
        assert sigma_eval(spec, 0.7, 0.0) == pytest.approx(1.5)  # second time bucket
        with pytest.raises(ValueError):
            sigma_eval(spec, 0.0, 1.5)

    def test_table_bounds_enforced(self):
        with pytest.raises(ValueError):
            LocalVolSpec(
                variant="user_table", lower=1.0, upper=1.5,
                t_knots=np.array([0.0]), x_knots=np.array([0.0, 1.0]),
                table=np.array([[0.5, 1.2]]),
            )


class TestStochVol:
    def test_constant_path(self):
        grid = TimeGrid(T=1.0, h=0.25)
        spec = StochVolSpec(variant="constant", rho=0.0, kappa=1.0)
        drv = draw_increments(grid, 6, seed=1, noise_label=NoiseLabel.B).values
        path = xi_path(spec, grid, drv)
        assert np.all(path == 1.0)
        assert spec.a == spec.b == 1.0

    def test_rough_bergomi_at_zero(self):
        grid = TimeGrid(T=1.0, h=0.5)
        spec = StochVolSpec(variant="rough_bergomi", rho=-0.7)
        drv = draw_increments(grid, 4, seed=1, noise_label=NoiseLabel.B).values
        path = xi_path(spec, grid, drv)
        assert np.all(path[:, 0] == pytest.approx(0.51))

    def test_rough_bergomi_mean_one_martingale(self):
        # E[exp(W_t^H - t^(2H)/2)] = 1, so E[xi_t] = floor + scale
        grid = TimeGrid(T=1.0, h=0.1)
        spec = StochVolSpec(variant="rough_bergomi", rho=-0.7, hurst=0.1)
        n = 100_000
        drv = draw_increments(grid, n, seed=8, noise_label=NoiseLabel.B).values
        path = xi_path(spec, grid, drv)
        terminal = path[:, -1]
        se = np.std(terminal, ddof=1) / np.sqrt(n)
        assert abs(np.mean(terminal) - 0.51) < 5 * se

    def test_adaptedness(self):
        # bumping the driver at step j must not move xi at indices <= j
        grid = TimeGrid(T=1.0, h=0.1)
        spec = StochVolSpec(variant="rough_bergomi", rho=-0.7, hurst=0.1)
        drv = draw_increments(grid, 16, seed=5, noise_label=NoiseLabel.B).values
        base = xi_path(spec, grid, drv)
        bumped = drv.copy()
        bumped[:, 4] += 0.5
        after = xi_path(spec, grid, bumped)
        assert np.array_equal(base[:, :5], after[:, :5])
        assert not np.array_equal(base[:, 5:], after[:, 5:])

    def test_two_state_levels_and_bounds(self):
        grid = TimeGrid(T=1.0, h=0.1)
        spec = two_state_vol(0.5, 2.0, rho=-0.7)
        drv = draw_increments(grid, 32, seed=5, noise_label=NoiseLabel.B).values
        path = xi_path(spec, grid, drv)
        assert set(np.unique(path)) <= {0.5, 2.0}
        assert spec.a == 0.5 and spec.b == 2.0

    def test_correlation_validated(self):
        with pytest.raises(ValueError):
            StochVolSpec(variant="constant", rho=1.0, kappa=1.0)


class TestSchemeParams:
    def test_lambda_pinned(self):
        p = SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=1e-3)
        assert p.lam == lambda_of(0.05, -0.7, 0.02)
        with pytest.raises(ValueError):
            SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=1e-3, lam=1e-5)

    def test_delta_range(self):
        SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=0.0)  # admitted for exactness work
        with pytest.raises(ValueError):
            SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=0.5)

    def test_epsilon_capped_by_h(self):
        SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=1e-3, epsilon=0.0004)
        with pytest.raises(ValueError):
            SchemeParams(c_min=0.05, h=0.02, rho=-0.7, delta=1e-3, epsilon=0.05)
