"""Local volatility functions, stochastic volatility processes, and scheme constants.

The local volatility sigma(t, x) must stay inside declared ellipticity bounds
[c, C]; the stochastic factor xi carries declared bounds [a, b] (b may be inf
for the rough Bergomi variant, whose violations are handled downstream by
clamping with an incident counter).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .stochastic import TimeGrid, rl_fbm_path

__all__ = [
    "LocalVolSpec",
    "StochVolSpec",
    "SchemeParams",
    "c_min_from_bounds",
    "lambda_of",
    "sigma_eval",
    "xi_path",
    "two_state_vol",
]


def c_min_from_bounds(a: float, b: float, c: float) -> float:
    """Scheme floor constant from the model bounds: c_min = a*c / (2*b)."""
    if not (0 < a <= b) or c <= 0:
        raise ValueError(f"bounds must satisfy 0 < a <= b and c > 0, got a={a}, b={b}, c={c}")
    return a * c / (2.0 * b)


def lambda_of(c_min: float, rho: float, h: float) -> float:
    """Variance of the injected Gaussian half-step: lam = c_min^2 (1 - rho^2) h."""
    if not abs(rho) < 1.0:
        raise ValueError(f"correlation rho = {rho} violates |rho| < 1")
    if c_min <= 0 or h <= 0:
        raise ValueError("c_min and h must be positive")
    return c_min * c_min * (1.0 - rho * rho) * h


@dataclass(frozen=True)
class LocalVolSpec:
    """Local volatility sigma(t, x) with ellipticity bounds c <= sigma <= C.

    variant:
      "constant"   sigma = value everywhere
      "tanh"       sigma(x) = 3/4 + tanh(x)/4, bounds [1/2, 1]
      "user_table" linear interpolation in x, piecewise-constant in t
    """

    variant: str
    value: float = 1.0
    lower: float = 0.0
    upper: float = 0.0
    t_knots: Optional[np.ndarray] = None
    x_knots: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.variant == "constant":
            if self.value <= 0:
                raise ValueError("constant volatility must be positive")
            object.__setattr__(self, "lower", self.value)
            object.__setattr__(self, "upper", self.value)
        elif self.variant == "tanh":
            object.__setattr__(self, "lower", 0.5)
            object.__setattr__(self, "upper", 1.0)
        elif self.variant == "user_table":
            if self.x_knots is None or self.table is None or self.t_knots is None:
                raise ValueError("user_table requires t_knots, x_knots and table")
            tab = np.asarray(self.table, dtype=float)
            if not (self.lower > 0 and self.upper >= self.lower):
                raise ValueError("user_table requires explicit bounds 0 < c <= C")
            if tab.min() < self.lower or tab.max() > self.upper:
                raise ValueError("table values escape the declared [c, C] bounds")
        else:
            raise ValueError(f"unknown local volatility variant {self.variant!r}")

    @property
    def c(self) -> float:
        return self.lower

    @property
    def C(self) -> float:
        return self.upper


def sigma_eval(spec: LocalVolSpec, t, x):
    """Evaluate sigma(t, x); scalar in, scalar out, arrays broadcast in x."""
    if spec.variant == "constant":
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, spec.value)
        return out if out.ndim else float(out)
    if spec.variant == "tanh":
        out = 0.75 + 0.25 * np.tanh(np.asarray(x, dtype=float))
        return out if out.ndim else float(out)
    # user_table: piecewise-constant bucket in t, linear interpolation in x
    xs = np.asarray(spec.x_knots, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < xs[0]) or np.any(x > xs[-1]):
        raise ValueError("x outside the tabulated range; extrapolation is not defined")
    row = int(np.searchsorted(np.asarray(spec.t_knots, dtype=float), t, side="right") - 1)
    row = min(max(row, 0), np.asarray(spec.table).shape[0] - 1)
    out = np.interp(x, xs, np.asarray(spec.table, dtype=float)[row])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class StochVolSpec:
    """Stochastic volatility process xi with declared bounds a <= xi <= b.

    variant:
      "constant"      xi = kappa on every path
      "rough_bergomi" xi_t = floor + scale * exp(W_t^H - t^(2H)/2), W^H driven
                      by the scheme's B increments; declared upper bound is inf
      "user"          custom path_fn(grid, driver_values) -> (n_paths, n_steps+1)
    """

    variant: str
    rho: float
    kappa: float = 1.0
    hurst: float = 0.1
    floor: float = 0.01
    scale: float = 0.5
    a: float = 0.0
    b: float = float("inf")
    path_fn: Optional[Callable[[TimeGrid, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ValueError(f"correlation rho = {self.rho} violates |rho| < 1")
        if self.variant == "constant":
            if self.kappa <= 0:
                raise ValueError("constant xi must be positive")
            object.__setattr__(self, "a", self.kappa)
            object.__setattr__(self, "b", self.kappa)
        elif self.variant == "rough_bergomi":
            if not 0.0 < self.hurst < 1.0:
                raise ValueError(f"Hurst parameter {self.hurst} outside (0, 1)")
            if self.floor <= 0 or self.scale <= 0:
                raise ValueError("floor and scale must be positive")
            object.__setattr__(self, "a", self.floor)
            object.__setattr__(self, "b", float("inf"))
        elif self.variant == "user":
            if self.path_fn is None:
                raise ValueError("user variant requires path_fn")
            if not (0 < self.a <= self.b):
                raise ValueError("user variant requires declared bounds 0 < a <= b")
        else:
            raise ValueError(f"unknown stochastic volatility variant {self.variant!r}")


def two_state_vol(lo: float, hi: float, rho: float) -> StochVolSpec:
    """B-adapted two-state process: xi_jh = hi where the running B sum is >= 0, else lo."""
    if not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi")

    def path_fn(grid: TimeGrid, driver: np.ndarray) -> np.ndarray:
        n_paths, n_steps = driver.shape
        level = np.zeros((n_paths, n_steps + 1))
        level[:, 1:] = np.cumsum(driver, axis=1)
        return np.where(level >= 0.0, hi, lo)

    return StochVolSpec(variant="user", rho=rho, a=lo, b=hi, path_fn=path_fn)


def xi_path(spec: StochVolSpec, grid: TimeGrid, driver_B) -> np.ndarray:
    """xi values on the grid, one row per path, adapted to the driving B stream.

    driver_B must be the same increment matrix used as the B component of the
    particle's noise, shape (n_paths, n_steps); xi at index j only reads
    increments with step index < j, so xi_0 is deterministic.
    """
    drv = np.atleast_2d(np.asarray(driver_B, dtype=float))
    n_paths, n_steps = drv.shape
    if n_steps != grid.n_steps:
        raise ValueError("driver_B must supply one increment per grid step")
    if spec.variant == "constant":
        return np.full((n_paths, n_steps + 1), spec.kappa)
    if spec.variant == "rough_bergomi":
        wh = rl_fbm_path(spec.hurst, grid, drv)
        t = grid.times()
        return spec.floor + spec.scale * np.exp(wh - 0.5 * t ** (2 * spec.hurst))
    out = np.asarray(spec.path_fn(grid, drv), dtype=float)
    if out.shape != (n_paths, n_steps + 1):
        raise ValueError("path_fn must return shape (n_paths, n_steps + 1)")
    if np.isfinite(spec.b) and (out.min() < spec.a or out.max() > spec.b):
        raise ValueError("user xi path escapes its declared bounds")
    return out


@dataclass(frozen=True)
class SchemeParams:
    """Constants shared by one scheme run.

    lam is pinned to c_min^2 (1 - rho^2) h; delta = 0 is admitted (exactness
    tests) but particle runs are expected to use delta in (0, 1/2); epsilon
    (kernel bandwidth, Nadaraya-Watson runs only) must satisfy epsilon <= h.
    """

    c_min: float
    h: float
    rho: float
    delta: float
    epsilon: Optional[float] = None
    lam: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        expected = lambda_of(self.c_min, self.rho, self.h)
        if self.lam is None:
            object.__setattr__(self, "lam", expected)
        elif self.lam != expected:
            raise ValueError(f"lam = {self.lam} must equal c_min^2 (1-rho^2) h = {expected}")
        if not 0.0 <= self.delta < 0.5:
            raise ValueError(f"delta = {self.delta} outside [0, 1/2)")
        if self.epsilon is not None:
            if self.epsilon <= 0:
                raise ValueError("epsilon must be positive")
            if self.epsilon > self.h:
                raise ValueError(f"epsilon = {self.epsilon} exceeds h = {self.h}")

    @property
    def rho_bar(self) -> float:
        return float(np.sqrt(1.0 - self.rho * self.rho))
