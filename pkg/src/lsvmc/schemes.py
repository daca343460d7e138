"""Time-stepping engines: target process, half-step particle system, kernel Euler system.

All updates are driftless Gaussian steps.  The half-step system advances each
particle in two sub-steps,

    X_half = X + sigma xi Psi^(-1/2) rho dB + (sigma^2 xi^2 / Psi - c_min^2)^(1/2) rho_bar dWbar
    X_next = X_half + c_min rho_bar dZ,

so the previous half-step positions form the conditioning set of the Gaussian
mixture estimator at the next step.  The kernel (Nadaraya-Watson) system is a
plain one-driver Euler step conditioning on the ensemble's current positions.

Within one step every particle reads the same frozen conditioning snapshot;
updates write only their own slot, so particle order never matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import KernelSpec, WeightedSample, nw_batch, psi_batch
from .models import LocalVolSpec, SchemeParams, StochVolSpec, c_min_from_bounds, sigma_eval, xi_path
from .stochastic import NoiseLabel, TimeGrid, draw_increments, standard_normal_rows

__all__ = [
    "BoundViolationError",
    "ParticleState",
    "PathStats",
    "RunSpec",
    "simulate_target",
    "half_step_advance",
    "nw_euler_advance",
    "euler_psi_advance",
    "run_system",
    "capture_conditioning",
    "run_frozen",
    "quad_var_variance",
    "quad_var_variance_jackknife",
]


class BoundViolationError(RuntimeError):
    """Strict mode: the diffusion square root went negative (model bounds violated)."""


@dataclass
class ParticleState:
    """Ensemble snapshot after step j.

    X_half holds the half-step positions produced by the latest advance; the
    Gaussian estimator conditions on them at the following step.  clamp_count
    accumulates negative square-root incidents (possible when xi is unbounded).
    """

    X: np.ndarray
    X_half: Optional[np.ndarray]
    xi: np.ndarray
    j: int
    clamp_count: int = 0
    last_rate: Optional[np.ndarray] = None
    min_sqrt_arg: float = float("inf")


@dataclass
class PathStats:
    """Per-path accumulators over a full run."""

    qv: np.ndarray
    terminal_X: np.ndarray
    max_diffusion_rate: float = 0.0
    sup_abs: Optional[np.ndarray] = None


def _conditioning(state: ParticleState, positions: np.ndarray, override: Optional[WeightedSample]) -> WeightedSample:
    if override is not None:
        return override
    return WeightedSample(xi_sq=state.xi * state.xi, positions=positions)


def half_step_advance(
    state: ParticleState,
    vol: LocalVolSpec,
    params: SchemeParams,
    dB: np.ndarray,
    dWbar: np.ndarray,
    dZ: np.ndarray,
    conditioning: Optional[WeightedSample] = None,
    xi_next: Optional[np.ndarray] = None,
    strict: bool = False,
    fast: bool = True,
) -> ParticleState:
    """One full step j -> j+1 of the half-step particle system.

    The estimator at step j >= 1 conditions on the half-step positions frozen at
    step j-1 (state.X_half) paired with the current xi values; at j = 0 it is
    the conditioning sample's mean of xi^2.  Pass `conditioning` to emulate the
    non-interacting system against a frozen reference ensemble.
    """
    j = state.j
    y = state.X
    if j == 0 and conditioning is None:
        psi = np.full(y.shape, float(np.mean(state.xi * state.xi)))
    else:
        sample = _conditioning(state, state.X_half, conditioning)
        psi = psi_batch(y, sample, params.lam, params.delta, j, fast=fast)
    sig = sigma_eval(vol, j * params.h, y)
    xi = state.xi
    inv_sqrt_psi = 1.0 / np.sqrt(psi)
    arg = sig * sig * xi * xi / psi - params.c_min * params.c_min
    neg = arg < 0.0
    n_neg = int(np.count_nonzero(neg))
    min_arg = arg.min() if arg.size else float("inf")
    if n_neg and strict:
        raise BoundViolationError(
            f"step {j}: {n_neg} particle(s) with sigma^2 xi^2 / Psi - c_min^2 < 0 "
            f"(min = {float(arg.min()):.3e}); model bounds are violated"
        )
    arg = np.maximum(arg, 0.0)
    rho, rho_bar = params.rho, params.rho_bar
    x_half = y + sig * xi * inv_sqrt_psi * rho * dB + np.sqrt(arg) * rho_bar * dWbar
    x_next = x_half + params.c_min * rho_bar * dZ
    rb2 = rho_bar * rho_bar
    rate = np.sqrt(
        (sig * xi * inv_sqrt_psi * rho) ** 2 + arg * rb2 + params.c_min**2 * rb2
    )
    return ParticleState(
        X=x_next,
        X_half=x_half,
        xi=state.xi if xi_next is None else xi_next,
        j=j + 1,
        clamp_count=state.clamp_count + n_neg,
        last_rate=rate,
        min_sqrt_arg=min(state.min_sqrt_arg, float(min_arg)),
    )


def nw_euler_advance(
    state: ParticleState,
    vol: LocalVolSpec,
    params: SchemeParams,
    kernel: KernelSpec,
    dW: np.ndarray,
    conditioning: Optional[WeightedSample] = None,
    xi_next: Optional[np.ndarray] = None,
) -> ParticleState:
    """One Euler step of the kernel-estimator system, conditioning on current positions."""
    j = state.j
    y = state.X
    if j == 0 and conditioning is None:
        psi = np.full(y.shape, float(np.mean(state.xi * state.xi)))
    else:
        sample = _conditioning(state, state.X, conditioning)
        psi = nw_batch(y, sample, kernel, params.delta, j)
    sig = sigma_eval(vol, j * params.h, y)
    coeff = sig * state.xi / np.sqrt(psi)
    x_next = y + coeff * dW
    return ParticleState(
        X=x_next,
        X_half=state.X_half,
        xi=state.xi if xi_next is None else xi_next,
        j=j + 1,
        clamp_count=state.clamp_count,
        last_rate=np.abs(coeff),
    )


def euler_psi_advance(
    state: ParticleState,
    vol: LocalVolSpec,
    params: SchemeParams,
    dW: np.ndarray,
    conditioning: Optional[WeightedSample],
    xi_next: Optional[np.ndarray] = None,
    fast: bool = True,
) -> ParticleState:
    """Classical one-driver Euler step using the Gaussian-mixture estimator.

    The conditioning sample must come from a half-step run (its half-step
    positions); this is the comparison scheme whose law matches the half-step
    system's.  At j = 0 the estimator is the conditioning sample's xi^2 mean.
    """
    j = state.j
    y = state.X
    if j == 0:
        base = conditioning.xi_sq if conditioning is not None else state.xi * state.xi
        psi = np.full(y.shape, float(np.mean(base)))
    else:
        if conditioning is None:
            raise ValueError("euler_psi_advance requires a conditioning sample for j >= 1")
        psi = psi_batch(y, conditioning, params.lam, params.delta, j, fast=fast)
    sig = sigma_eval(vol, j * params.h, y)
    coeff = sig * state.xi / np.sqrt(psi)
    x_next = y + coeff * dW
    return ParticleState(
        X=x_next,
        X_half=state.X_half,
        xi=state.xi if xi_next is None else xi_next,
        j=j + 1,
        clamp_count=state.clamp_count,
        last_rate=np.abs(coeff),
    )


def simulate_target(
    grid: TimeGrid,
    vol: LocalVolSpec,
    n_paths: int,
    seed: int,
    x0: float = 0.0,
    noise_label: NoiseLabel = NoiseLabel.B,
    chunk: int = 65_536,
) -> np.ndarray:
    """Terminal values of the Markovian target dY = sigma(t, Y) dW by Euler stepping.

    Paths are simulated in chunks to bound the increment matrix in memory;
    chunking does not change any path (streams are per-particle).
    """
    out = np.empty(n_paths)
    sqrt_h = math.sqrt(grid.h)
    n_steps = grid.n_steps
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        z = standard_normal_rows(m, n_steps, seed, noise_label, first_particle=start)
        y = np.full(m, x0)
        for jj in range(n_steps):
            y = y + sigma_eval(vol, jj * grid.h, y) * sqrt_h * z[:, jj]
        out[start : start + m] = y
    return out


@dataclass
class RunSpec:
    """Everything one particle-system run needs."""

    grid: TimeGrid
    vol: LocalVolSpec
    svol: StochVolSpec
    n_particles: int
    seed: int
    delta: float
    x0: float = 0.0
    c_min: Optional[float] = None
    epsilon: Optional[float] = None
    kernel_shape: str = "quartic"
    strict: bool = False
    fast: bool = True

    def params(self) -> SchemeParams:
        c_min = self.c_min
        if c_min is None:
            if not np.isfinite(self.svol.b):
                raise ValueError("c_min must be given explicitly when xi is unbounded")
            c_min = c_min_from_bounds(self.svol.a, self.svol.b, self.vol.c)
        return SchemeParams(
            c_min=c_min, h=self.grid.h, rho=self.svol.rho, delta=self.delta, epsilon=self.epsilon
        )


def run_system(scheme: str, spec: RunSpec) -> tuple[PathStats, ParticleState]:
    """Run the interacting particle system for scheme "half_step" or "nw_euler".

    Steps j = 0 .. T/h - 1, accumulating squared full-step increments per
    particle.  Deterministic given spec (counter-based streams, fixed
    summation order), independent of any parallelism in the caller.
    """
    if scheme not in ("half_step", "nw_euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    params = spec.params()
    grid = spec.grid
    n = spec.n_particles
    n_steps = grid.n_steps
    dB = draw_increments(grid, n, spec.seed, NoiseLabel.B).values
    xi_all = xi_path(spec.svol, grid, dB)
    kernel = None
    if scheme == "nw_euler":
        if params.epsilon is None:
            raise ValueError("nw_euler requires epsilon")
        kernel = KernelSpec(epsilon=params.epsilon, shape=spec.kernel_shape)
        dBbar = draw_increments(grid, n, spec.seed, NoiseLabel.BBAR).values
        dW = params.rho * dB + params.rho_bar * dBbar
    else:
        dWbar = draw_increments(grid, n, spec.seed, NoiseLabel.BBAR).values
        dZ = draw_increments(grid, n, spec.seed, NoiseLabel.Z).values

    state = ParticleState(X=np.full(n, spec.x0), X_half=None, xi=xi_all[:, 0], j=0)
    qv = np.zeros(n)
    sup_abs = np.abs(state.X).copy()
    max_rate = 0.0
    for j in range(n_steps):
        x_prev = state.X
        xi_next = xi_all[:, j + 1]
        if scheme == "half_step":
            state = half_step_advance(
                state, spec.vol, params, dB[:, j], dWbar[:, j], dZ[:, j],
                xi_next=xi_next, strict=spec.strict, fast=spec.fast,
            )
        else:
            state = nw_euler_advance(state, spec.vol, params, kernel, dW[:, j], xi_next=xi_next)
        step = state.X - x_prev
        qv += step * step
        np.maximum(sup_abs, np.abs(state.X), out=sup_abs)
        max_rate = max(max_rate, float(state.last_rate.max()))
    stats = PathStats(qv=qv, terminal_X=state.X.copy(), max_diffusion_rate=max_rate, sup_abs=sup_abs)
    return stats, state


def capture_conditioning(spec: RunSpec) -> list[WeightedSample]:
    """Per-step conditioning samples of a half-step run (its empirical measures).

    Entry j >= 1 pairs the step-j xi values with the step-(j-1) half-step
    positions; entry 0 holds the initial xi values (only their mean is used).
    Feeding these frozen samples to another run emulates the non-interacting
    system driven by an independent reference ensemble.
    """
    params = spec.params()
    grid = spec.grid
    n = spec.n_particles
    dB = draw_increments(grid, n, spec.seed, NoiseLabel.B).values
    dWbar = draw_increments(grid, n, spec.seed, NoiseLabel.BBAR).values
    dZ = draw_increments(grid, n, spec.seed, NoiseLabel.Z).values
    xi_all = xi_path(spec.svol, grid, dB)
    state = ParticleState(X=np.full(n, spec.x0), X_half=None, xi=xi_all[:, 0], j=0)
    samples = [WeightedSample(xi_sq=xi_all[:, 0] ** 2, positions=np.full(n, spec.x0))]
    for j in range(grid.n_steps):
        state = half_step_advance(
            state, spec.vol, params, dB[:, j], dWbar[:, j], dZ[:, j],
            xi_next=xi_all[:, j + 1], strict=spec.strict, fast=spec.fast,
        )
        samples.append(WeightedSample(xi_sq=state.xi * state.xi, positions=state.X_half))
    return samples


def run_frozen(scheme: str, spec: RunSpec, conditioning: list[WeightedSample]) -> tuple[PathStats, ParticleState]:
    """Non-interacting run: every estimator query reads the frozen per-step samples.

    scheme "half_step" replays the two-sub-step system; "euler_psi" is the
    classical one-driver Euler comparison scheme driven by rho dB + rho_bar
    dBbar with the same Gaussian-mixture estimator law.
    """
    if scheme not in ("half_step", "euler_psi"):
        raise ValueError(f"unknown frozen scheme {scheme!r}")
    params = spec.params()
    grid = spec.grid
    n = spec.n_particles
    n_steps = grid.n_steps
    if len(conditioning) < n_steps + 1:
        raise ValueError("need one conditioning sample per step")
    dB = draw_increments(grid, n, spec.seed, NoiseLabel.B).values
    dBbar = draw_increments(grid, n, spec.seed, NoiseLabel.BBAR).values
    xi_all = xi_path(spec.svol, grid, dB)
    state = ParticleState(X=np.full(n, spec.x0), X_half=None, xi=xi_all[:, 0], j=0)
    qv = np.zeros(n)
    sup_abs = np.abs(state.X).copy()
    max_rate = 0.0
    if scheme == "half_step":
        dZ = draw_increments(grid, n, spec.seed, NoiseLabel.Z).values
    else:
        dW = params.rho * dB + params.rho_bar * dBbar
    for j in range(n_steps):
        x_prev = state.X
        if scheme == "half_step":
            state = half_step_advance(
                state, spec.vol, params, dB[:, j], dBbar[:, j], dZ[:, j],
                conditioning=conditioning[j], xi_next=xi_all[:, j + 1],
                strict=spec.strict, fast=spec.fast,
            )
        else:
            state = euler_psi_advance(
                state, spec.vol, params, dW[:, j],
                conditioning=conditioning[j], xi_next=xi_all[:, j + 1], fast=spec.fast,
            )
        step = state.X - x_prev
        qv += step * step
        np.maximum(sup_abs, np.abs(state.X), out=sup_abs)
        max_rate = max(max_rate, float(state.last_rate.max()))
    stats = PathStats(qv=qv, terminal_X=state.X.copy(), max_diffusion_rate=max_rate, sup_abs=sup_abs)
    return stats, state


def quad_var_variance(stats: PathStats) -> float:
    """Unbiased cross-particle sample variance of the accumulated quadratic variation."""
    if stats.qv.size < 2:
        raise ValueError("variance needs at least two particles")
    return float(np.var(stats.qv, ddof=1))


def quad_var_variance_jackknife(stats: PathStats) -> tuple[float, float]:
    """(variance, jackknife standard error) of the quadratic-variation variance."""
    x = stats.qv
    n = x.size
    if n < 3:
        raise ValueError("jackknife needs at least three particles")
    s1 = x.sum()
    s2 = (x * x).sum()
    mean_loo = (s1 - x) / (n - 1)
    var_loo = (s2 - x * x - (n - 1) * mean_loo * mean_loo) / (n - 2)
    theta = var_loo
    se = math.sqrt((n - 1) / n * float(np.sum((theta - theta.mean()) ** 2)))
    return float(np.var(x, ddof=1)), se
