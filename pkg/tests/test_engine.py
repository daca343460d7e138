"""Payoffs, references, statistics, sweeps, rate fitting, config and CSV round-trips."""

import os
import textwrap

import numpy as np
import pytest

from lsvmc.engine import (
    SWEEP_COLUMNS,
    ExperimentConfig,
    cell_seed,
    fit_rate,
    load_config,
    mc_stats,
    moving_average,
    payoff_eval,
    read_csv,
    reference_fake_bm,
    reference_tanh,
    remark_preset,
    run_sweep,
    sweep_cells,
    write_csv,
)


class TestPayoffs:
    def test_values(self):
        assert payoff_eval("cosine", 0.0) == 1.0
        assert payoff_eval("log_call", 1.0) == pytest.approx(0.5)
        assert payoff_eval("log_call", 0.0) == 0.0  # e^{-1} - 0.5 < 0
        assert np.allclose(payoff_eval("cosine", np.array([0.0, np.pi])), [1.0, -1.0])

    def test_unknown(self):
        with pytest.raises(ValueError):
            payoff_eval("digital", 0.0)


class TestReferences:
    def test_cosine_closed_form(self):
        assert reference_fake_bm("cosine") == pytest.approx(0.60653066, abs=5e-9)

    def test_log_call_rounds_to_three_decimals(self):
        val = reference_fake_bm("log_call")
        assert round(val, 3) == 0.269
        # 40-digit closed-form evaluation, frozen
        assert val == pytest.approx(0.2687324615092369, rel=1e-12)

    def test_unknown_payoff(self):
        with pytest.raises(ValueError):
            reference_fake_bm("digital")

    def test_tanh_reference_frozen_and_reproducible(self):
        # pilot value frozen; depends only on sigma (the target has no xi)
        val, se = reference_tanh("cosine", seed=424242, n_steps=200, n_paths=250_000)
        assert se < 1e-3
        assert val == pytest.approx(0.7570728356392934, rel=1e-12)
        val2, _ = reference_tanh("cosine", seed=424242, n_steps=200, n_paths=250_000)
        assert val == val2


class TestMcStats:
    def test_constant(self):
        assert mc_stats([1.0, 1.0, 1.0]) == (1.0, 0.0)

    def test_two_point(self):
        mean, se = mc_stats([0.0, 2.0])
        assert mean == 1.0 and se == pytest.approx(1.0)

    def test_clt(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0, 1, 100_000)
        mean, se = mc_stats(x)
        assert abs(mean) < 5 / np.sqrt(x.size)
        assert se == pytest.approx(1.0 / np.sqrt(x.size), rel=0.02)

    def test_empty(self):
        with pytest.raises(ValueError):
            mc_stats([])


class TestFitRate:
    def test_linear_profile_exact_on_any_grid(self):
        # both coordinates are window-averaged, so error = h stays on its curve
        h = np.geomspace(1 / 64, 1 / 4, 12)
        assert fit_rate(h, h.copy(), window=3) == pytest.approx(1.0, abs=1e-12)
        h2 = 1.0 / np.arange(1, 51)
        assert fit_rate(h2, h2.copy(), window=3) == pytest.approx(1.0, abs=1e-12)

    def test_sqrt_profile(self):
        h = np.geomspace(1 / 64, 1 / 4, 12)
        assert fit_rate(h, np.sqrt(h), window=3) == pytest.approx(0.5, abs=1e-9)

    def test_h_plus_delta_profile(self):
        # the dashed reference profile h + 0.001 over the published h range;
        # independent oracle: polyfit on the same smoothed pairs
        h = 1.0 / np.arange(1, 51)
        errors = h + 0.001
        slope = fit_rate(h, errors, window=3)
        hs = np.sort(h)
        kernel = np.ones(3) / 3
        sm_h = np.convolve(hs, kernel, mode="valid")
        sm_e = np.convolve(hs + 0.001, kernel, mode="valid")
        oracle = np.polyfit(np.log(sm_h), np.log(sm_e), 1)[0]
        assert slope == pytest.approx(oracle, rel=1e-12)
        assert 0.8 < slope < 1.0

    def test_nonpositive_errors_dropped(self):
        h = np.array([1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32])
        errors = np.array([1 / 2, 0.0, 1 / 8, 1 / 16, 1 / 32])
        slope = fit_rate(h, errors, window=3)
        assert slope == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_rate(np.array([0.5, 0.25]), np.array([0.0, 0.0]), window=3)

    def test_moving_average_window_one(self):
        x = np.array([3.0, 1.0, 2.0])
        assert np.array_equal(moving_average(x, 1), x)
        assert np.allclose(moving_average(x, 3), [2.0])


class TestSweep:
    def small_config(self, **kw):
        defaults = dict(
            scheme="half_step", h_list=(0.5, 0.25, 0.125), n_list=(50, 100),
            delta_list=(0.001,), payoffs=("cosine",), seed=5,
            svol_variant="rough_bergomi", c_min=0.05,
        )
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_cardinality(self):
        config = self.small_config()
        assert len(sweep_cells(config)) == 6
        rows = run_sweep(config)
        assert len(rows) == 6

    def test_full_grid_cardinality(self):
        config = self.small_config(h_list=tuple(1.0 / k for k in range(1, 51)),
                                   n_list=(1000, 2000, 3000, 5000, 8000))
        assert len(sweep_cells(config)) == 250

    def test_delta_sweep_grid_accepted(self):
        config = self.small_config(h_list=(0.1,), n_list=(6000,),
                                   delta_list=(0.1, 0.05, 0.01, 0.001))
        assert len(sweep_cells(config)) == 4

    def test_rows_pure_function_of_config(self, tmp_path):
        config = self.small_config()
        rows1 = run_sweep(config, threads=1, timing=False)
        rows2 = run_sweep(config, threads=4, timing=False)
        assert rows1 == rows2
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(rows1, p1)
        write_csv(rows2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_csv_round_trip_and_format(self, tmp_path):
        config = self.small_config(h_list=(0.5,), n_list=(50,))
        rows = run_sweep(config, timing=False)
        path = tmp_path / "out.csv"
        write_csv(rows, path)
        raw = path.read_bytes()
        assert b"\r" not in raw  # LF endings
        header = raw.split(b"\n", 1)[0].decode()
        assert header == ",".join(SWEEP_COLUMNS)
        back = read_csv(path)
        assert len(back) == 1
        assert back[0]["estimate"] == rows[0].estimate  # full round-trip precision
        assert back[0]["abs_error"] == abs(rows[0].estimate - rows[0].reference)
        assert back[0]["N"] == 50

    def test_cell_seed_stability(self):
        a = cell_seed(7, "half_step", "cosine", repr(0.5), 100)
        b = cell_seed(7, "half_step", "cosine", repr(0.5), 100)
        c = cell_seed(8, "half_step", "cosine", repr(0.5), 100)
        assert a == b != c

    def test_invalid_delta_rejected(self):
        with pytest.raises(ValueError):
            self.small_config(delta_list=(0.0,))
        with pytest.raises(ValueError):
            self.small_config(delta_list=(0.6,))

    def test_cell_failure_recorded_in_row(self):
        # strict mode aborts clamping cells; the sweep must continue with NaN rows
        config = self.small_config(h_list=(0.02, 0.5), n_list=(2000,), strict=True)
        rows = run_sweep(config, timing=False)
        assert len(rows) == 2
        failed = [r for r in rows if np.isnan(r.estimate)]
        assert failed and all(r.clamp_count == -1 for r in failed)

    def test_nw_epsilon_rule(self):
        config = self.small_config(scheme="nw_euler", h_list=(0.1,), n_list=(200,))
        assert config.epsilon_for(0.1) == pytest.approx(0.01)
        with pytest.raises(ValueError):
            self.small_config(scheme="nw_euler", epsilon_rule="const:0.9", h_list=(0.1,))

    def test_preset(self):
        p = remark_preset(0.1)
        assert p == {"h": 0.1, "delta": 0.1, "epsilon": pytest.approx(0.01)}
        assert p["epsilon"] <= p["h"]


class TestConfigFile:
    CONFIG = textwrap.dedent("""
        [run]
        scheme = half_step
        t = 1.0
        h_list = 0.5, 0.25
        n_list = 64
        delta_list = 0.001
        payoffs = cosine, log_call
        seed = 123
        strict = false

        [local_vol]
        variant = constant
        value = 1.0

        [stoch_vol]
        variant = rough_bergomi
        rho = -0.7
        c_min = 0.05

        [output]
        path = out.csv
    """)

    def test_load(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(self.CONFIG)
        config = load_config(path, env={})
        assert config.scheme == "half_step"
        assert config.h_list == (0.5, 0.25)
        assert config.payoffs == ("cosine", "log_call")
        assert config.seed == 123
        assert config.c_min == 0.05
        assert config.output_path == "out.csv"

    def test_seed_env_override(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(self.CONFIG)
        config = load_config(path, env={"LSVSIM_SEED": "999"})
        assert config.seed == 999

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_config("/nonexistent/path.ini")

    def test_fake_bm_detection(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(self.CONFIG)
        config = load_config(path, env={})
        assert config.is_fake_bm()
