"""Deterministic Gaussian streams, Brownian / fractional Brownian paths, Gaussian density helpers.

Conventions:
  - Every random number is a pure function of (seed, particle_id, noise_label, step).
    Streams are counter-based (Philox keyed per particle), so results do not depend
    on run order, block shape, or thread count.
  - Increments over a step of size h are N(0, h).
  - The Riemann-Liouville fractional path is built from per-cell weights chosen so
    that the discrete variance at every grid point t_k equals t_k^(2H) exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.random import Generator, Philox

__all__ = [
    "NoiseLabel",
    "TimeGrid",
    "RandomStreamSpec",
    "IncrementBlock",
    "gaussian_pdf",
    "log_gaussian_pdf",
    "draw_increments",
    "normal_for",
    "correlate",
    "rl_fbm_weights",
    "rl_fbm_path",
]

_MASK64 = (1 << 64) - 1

# Switch gaussian_pdf to the exp-of-log form below this variance to avoid
# premature underflow; lambda = c_min^2 (1-rho^2) h sits around 1e-5..1e-7.
_LOG_FORM_LAM = 1e-6


class NoiseLabel(Enum):
    """Labels for the mutually independent driving noises."""

    B = 0
    BBAR = 1
    Z = 2
    HDRIVER = 3


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with step h; requires T/h to be an integer."""

    T: float
    h: float

    def __post_init__(self):
        if self.T < 0 or self.h <= 0:
            raise ValueError("need T >= 0 and h > 0")
        if self.h > 1.0:
            raise ValueError(f"h = {self.h} not admitted; grids use h in (0, 1]")
        ratio = self.T / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T/h = {ratio} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    def times(self) -> np.ndarray:
        """Grid points t_0 = 0, ..., t_n = T."""
        return np.arange(self.n_steps + 1) * self.h


@dataclass(frozen=True)
class RandomStreamSpec:
    """Address of a single standard normal inside the global stream family."""

    seed: int
    particle_id: int
    noise_label: NoiseLabel
    step: int


@dataclass(frozen=True)
class IncrementBlock:
    """Matrix of Gaussian increments, one row per path, N(0, h) entries."""

    values: np.ndarray
    h: float


def _splitmix64(x: int) -> int:
    # Standard splitmix64 finalizer; spreads low-entropy inputs over 64 bits.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _stream_key(seed: int, particle_id: int, label: NoiseLabel) -> np.ndarray:
    """128-bit Philox key for one (seed, particle, noise) stream.

    Returned as a uint64 array; the key word width must be explicit because
    numpy interprets plain Python ints above 2^63 as a single wide integer.
    """
    k0 = _splitmix64(_splitmix64(seed & _MASK64) ^ _splitmix64(particle_id & _MASK64))
    k1 = _splitmix64(k0 ^ _splitmix64(0xA5A5A5A5 + label.value))
    return np.array([k0, k1], dtype=np.uint64)


def _row_generator(seed: int, particle_id: int, label: NoiseLabel) -> Generator:
    return Generator(Philox(key=_stream_key(seed, particle_id, label)))


def normal_for(spec: RandomStreamSpec) -> float:
    """Standard normal addressed by spec; pure function of the tuple."""
    g = _row_generator(spec.seed, spec.particle_id, spec.noise_label)
    return float(g.standard_normal(spec.step + 1)[spec.step])


def standard_normal_rows(
    n_rows: int,
    n_cols: int,
    seed: int,
    label: NoiseLabel,
    first_particle: int = 0,
) -> np.ndarray:
    """Matrix of unit normals; row i belongs to particle first_particle + i.

    Entry (i, j) depends only on (seed, first_particle + i, label, j), never on
    the requested shape, so chunked draws tile into the same global stream.
    """
    out = np.empty((n_rows, n_cols))
    # One Philox per row would also work but spends ~25us per construction
    # (numpy seeds an unused SeedSequence from os.urandom); resetting the
    # key/counter state of a shared instance yields the identical stream.
    bg = Philox(key=0)
    gen = Generator(bg)
    template = bg.state
    template["buffer_pos"] = 4
    template["has_uint32"] = 0
    template["uinteger"] = 0
    for i in range(n_rows):
        template["state"] = {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": _stream_key(seed, first_particle + i, label),
        }
        bg.state = template
        out[i] = gen.standard_normal(n_cols)
    return out


def draw_increments(
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    noise_label: NoiseLabel,
    first_particle: int = 0,
) -> IncrementBlock:
    """Brownian increments over each grid cell: n_paths x n_steps, N(0, h) i.i.d."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    z = standard_normal_rows(n_paths, grid.n_steps, seed, noise_label, first_particle)
    return IncrementBlock(values=np.sqrt(grid.h) * z, h=grid.h)


def correlate(dB, dBbar, rho: float):
    """Combine independent increments into rho*dB + sqrt(1-rho^2)*dBbar.

    Requires |rho| < 1 (the driving noises must not be fully correlated).
    """
    if not abs(rho) < 1.0:
        raise ValueError(f"correlation rho = {rho} violates |rho| < 1")
    rho_bar = np.sqrt(1.0 - rho * rho)
    return rho * np.asarray(dB) + rho_bar * np.asarray(dBbar)


def gaussian_pdf(x, lam: float):
    """Centered Gaussian density with variance lam: (2*pi*lam)^(-1/2) exp(-x^2 / (2 lam))."""
    if lam <= 0:
        raise ValueError(f"variance lam = {lam} must be positive")
    x = np.asarray(x, dtype=float)
    if lam < _LOG_FORM_LAM:
        out = np.exp(-0.5 * np.log(2.0 * np.pi * lam) - x * x / (2.0 * lam))
    else:
        out = np.exp(-x * x / (2.0 * lam)) / np.sqrt(2.0 * np.pi * lam)
    return out if out.ndim else float(out)


def log_gaussian_pdf(x, lam: float):
    """Log of gaussian_pdf; safe for arguments where the density itself underflows."""
    if lam <= 0:
        raise ValueError(f"variance lam = {lam} must be positive")
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):  # x^2 -> inf gives the correct -inf log-density
        out = -0.5 * np.log(2.0 * np.pi * lam) - x * x / (2.0 * lam)
    return out if out.ndim else float(out)


def rl_fbm_weights(H: float, n_steps: int, h: float) -> np.ndarray:
    """Combined per-lag weights a_m, m = 1..n_steps, for the discrete Volterra sum.

    W_{t_k} = sum_{j<k} a_{k-j} dW_j with
    a_m = sqrt(((m h)^(2H) - ((m-1) h)^(2H)) / h),
    i.e. the normalisation constant sqrt(2H) is absorbed into the root of the
    exact kernel-square average over each cell.  The telescoping sum makes
    Var(W_{t_k}) = t_k^(2H) exact at every grid point.
    """
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst parameter H = {H} must lie in (0, 1)")
    m = np.arange(1, n_steps + 1, dtype=float)
    return np.sqrt(((m * h) ** (2 * H) - ((m - 1) * h) ** (2 * H)) / h)


def rl_fbm_path(H: float, grid: TimeGrid, driver) -> np.ndarray:
    """Riemann-Liouville fractional Brownian motion on the grid.

    driver : array of shape (n_steps,) or (n_paths, n_steps) of N(0, h) increments.
    Returns the path(s) at t_0..t_n (one more column than driver); W_0 = 0.
    For H = 1/2 all weights equal one and the path is the running sum of driver.
    """
    drv = np.atleast_2d(np.asarray(driver, dtype=float))
    n_steps = drv.shape[1]
    if n_steps != grid.n_steps:
        raise ValueError("driver must supply one increment per grid step")
    w = rl_fbm_weights(H, n_steps, grid.h)
    # Lower-triangular Toeplitz apply: out[:, k] = sum_{j<k} w[k-j] * drv[:, j].
    # Dense matmul keeps the computation exact-order deterministic.
    tri = np.zeros((n_steps, n_steps))
    for k in range(n_steps):
        tri[k, : k + 1] = w[k::-1]
    out = np.zeros((drv.shape[0], n_steps + 1))
    out[:, 1:] = drv @ tri.T
    if np.asarray(driver).ndim == 1:
        return out[0]
    return out
