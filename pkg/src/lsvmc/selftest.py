"""Built-in invariant suites for `lsvsim selftest`.

Each check prints one PASS/FAIL line; the runner returns the failure count.
These are quick versions of the property suites in the test directory, kept
inside the package so an installed engine can vet itself without pytest.
"""

from __future__ import annotations

import numpy as np

from .engine import fit_rate, mc_stats, payoff_eval, reference_fake_bm
from .estimators import WeightedSample, cond_exp_oracle, KernelSpec, nw_batch, nw_estimate, psi_batch, psi_value
from .models import LocalVolSpec, StochVolSpec, two_state_vol, xi_path
from .schemes import RunSpec, run_system
from .stochastic import NoiseLabel, TimeGrid, draw_increments, gaussian_pdf, rl_fbm_weights


def _gaussian_facts() -> bool:
    xs = np.arange(-10.0, 10.05, 0.1)
    ok = True
    for lam in (1e-4, 1e-2, 1.0):
        phi = gaussian_pdf(xs, lam)
        for gamma in (0.1, 0.5, 1.0):
            lhs = np.abs(xs) * phi
            rhs = (np.e * gamma) ** -0.5 * lam ** ((1.0 - gamma) / 2.0) * phi ** (1.0 - gamma)
            ok &= bool(np.all(lhs <= rhs * (1.0 + 1e-12) + 1e-300))
            eps = 0.05
            ys = xs + 0.04
            rhs2 = (2 * np.pi * lam) ** (gamma / 2.0) * phi ** (1.0 + gamma) * np.exp(-(eps**2) / (gamma * lam))
            ok &= bool(np.all(gaussian_pdf(ys, lam) >= rhs2 * (1.0 - 1e-12)))
            ok &= bool(np.all(phi ** (1.0 + gamma) <= (2 * np.pi * lam) ** (-gamma / 2.0) * phi * (1.0 + 1e-12) + 1e-300))
    return ok


def _fbm_variance() -> bool:
    ok = True
    for H in (0.1, 0.3, 0.5):
        grid = TimeGrid(T=1.0, h=0.02)
        w = rl_fbm_weights(H, grid.n_steps, grid.h)
        var = np.cumsum(w * w) * grid.h
        target = (np.arange(1, grid.n_steps + 1) * grid.h) ** (2 * H)
        ok &= bool(np.max(np.abs(var / target - 1.0)) < 1e-12)
    return ok


def _stream_determinism() -> bool:
    grid = TimeGrid(T=1.0, h=0.1)
    a = draw_increments(grid, 64, 99, NoiseLabel.B).values
    b = draw_increments(grid, 64, 99, NoiseLabel.B).values
    c = draw_increments(grid, 32, 99, NoiseLabel.B).values
    return bool(np.array_equal(a, b) and np.array_equal(a[:32], c))


def _estimator_exactness() -> bool:
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        n = rng.integers(1, 21)
        lam = float(rng.choice([1e-5, 1e-3, 1e-1]))
        pos = rng.normal(0.0, 10 * np.sqrt(lam), n)
        sample = WeightedSample(xi_sq=rng.uniform(0.25, 4.0, n), positions=pos)
        q = rng.uniform(pos.min() - 6 * np.sqrt(lam), pos.max() + 6 * np.sqrt(lam), 50)
        got = psi_value(q, sample, lam, 0.0, j=1)
        want = cond_exp_oracle(sample, lam, q)
        worst = max(worst, float(np.max(np.abs(got / want - 1.0))))
    return worst <= 1e-8


def _boundedness() -> bool:
    rng = np.random.default_rng(6)
    kernel = KernelSpec(epsilon=0.25)
    for _ in range(50):
        a2, b2 = 0.3, 3.5
        n = int(rng.integers(2, 60))
        sample = WeightedSample(xi_sq=rng.uniform(a2, b2, n), positions=rng.normal(0, 1, n))
        q = rng.normal(0, 1.5, 64)
        for delta in (0.0, 1e-3, 1e-1):
            psi = psi_batch(q, sample, 1e-3, delta, j=1)
            if psi.min() < a2 or psi.max() > b2:
                return False
            if delta > 0:
                nw = nw_batch(q, sample, kernel, delta, j=1)
                if nw.min() < a2 or nw.max() > b2:
                    return False
    return True


def _windowed_matches_naive() -> bool:
    rng = np.random.default_rng(7)
    n = 1000
    sample = WeightedSample(xi_sq=rng.uniform(0.25, 4.0, n), positions=rng.normal(0, 1, n))
    q = rng.normal(0, 1, 200)
    lam, delta = 1e-3, 1e-3
    fast = psi_batch(q, sample, lam, delta, j=1, fast=True)
    slow = psi_batch(q, sample, lam, delta, j=1, fast=False)
    if np.max(np.abs(fast / slow - 1.0)) > 1e-12:
        return False
    kernel = KernelSpec(epsilon=0.3)
    fast_nw = nw_batch(q, sample, kernel, delta, j=1)
    naive = np.array([
        (np.mean(sample.xi_sq * kernel.weight(y - sample.positions)) + delta)
        / (np.mean(kernel.weight(y - sample.positions)) + delta)
        for y in q
    ])
    return bool(np.max(np.abs(fast_nw / naive - 1.0)) <= 1e-12)


def _constant_degeneracy() -> bool:
    sample = WeightedSample(xi_sq=np.full(40, 2.25), positions=np.linspace(-1, 1, 40))
    q = np.linspace(-1.2, 1.2, 33)
    psi = psi_batch(q, sample, 1e-4, 0.0, j=1)
    nw = nw_estimate(q, sample, KernelSpec(epsilon=0.5), 0.0, j=1)
    return bool(np.all(psi == 2.25) and np.all(np.asarray(nw) == 2.25))


def _martingale_and_run() -> bool:
    grid = TimeGrid(T=1.0, h=0.1)
    svol = two_state_vol(0.5, 2.0, rho=-0.7)
    spec = RunSpec(grid=grid, vol=LocalVolSpec(variant="tanh"), svol=svol,
                   n_particles=4000, seed=11, delta=1e-3)
    stats, state = run_system("half_step", spec)
    mean, se = mc_stats(stats.terminal_X)
    return abs(mean) <= 4 * se and state.clamp_count == 0


def _engine_basics() -> bool:
    ok = abs(reference_fake_bm("cosine") - np.exp(-0.5)) < 1e-15
    ok &= round(reference_fake_bm("log_call"), 3) == 0.269
    ok &= payoff_eval("log_call", 1.0) == 0.5
    m, s = mc_stats([0.0, 2.0])
    ok &= m == 1.0 and s == 1.0
    h = np.geomspace(1 / 64, 1 / 4, 10)
    ok &= abs(fit_rate(h, h, window=3) - 1.0) < 1e-9
    return bool(ok)


def _xi_adaptedness() -> bool:
    grid = TimeGrid(T=1.0, h=0.1)
    spec = StochVolSpec(variant="rough_bergomi", rho=-0.7)
    drv = draw_increments(grid, 8, 3, NoiseLabel.B).values
    base = xi_path(spec, grid, drv)
    bumped = drv.copy()
    bumped[:, 5] += 1.0
    after = xi_path(spec, grid, bumped)
    return bool(np.array_equal(base[:, : 6], after[:, : 6]) and not np.array_equal(base[:, 6:], after[:, 6:]))


CHECKS = [
    ("gaussian facts (three inequalities)", _gaussian_facts),
    ("fractional path variance telescopes to t^(2H)", _fbm_variance),
    ("stream determinism and purity", _stream_determinism),
    ("gaussian-mixture estimator matches oracle", _estimator_exactness),
    ("estimator boundedness", _boundedness),
    ("windowed evaluation matches naive", _windowed_matches_naive),
    ("constant-xi degeneracy", _constant_degeneracy),
    ("half-step run is a martingale", _martingale_and_run),
    ("engine references, stats, rate fit", _engine_basics),
    ("xi paths adapted to the driving stream", _xi_adaptedness),
]


def run_selftest() -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            ok = fn()
        except Exception as exc:  # noqa: BLE001
            ok = False
            print(f"FAIL {name}: {exc}")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failures += 0 if ok else 1
    return failures
