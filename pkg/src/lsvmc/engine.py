"""Experiment harness: references, payoffs, sweeps, rate fitting, config and CSV I/O.

A sweep is the Cartesian product of (scheme, payoff, h, N, delta[, epsilon]);
each cell runs one particle system with a seed derived from the master seed and
the cell coordinates, so cells are independent and reorderable.  Rows are
always emitted in configuration order regardless of how many worker threads
execute the cells.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import hashlib
import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .models import LocalVolSpec, StochVolSpec, two_state_vol
from .schemes import RunSpec, quad_var_variance, run_system, simulate_target
from .stochastic import TimeGrid

__all__ = [
    "ExperimentConfig",
    "SweepResult",
    "SWEEP_COLUMNS",
    "payoff_eval",
    "reference_fake_bm",
    "reference_tanh",
    "mc_stats",
    "cell_seed",
    "run_cell",
    "run_sweep",
    "moving_average",
    "fit_rate",
    "write_csv",
    "read_csv",
    "load_config",
    "remark_preset",
]

log = logging.getLogger("lsvmc")

SEED_ENV_VAR = "LSVSIM_SEED"

COS_REFERENCE = math.exp(-0.5)


def _phi_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# E[(e^Z - 1/2)^+] for Z ~ N(-1, 1): lognormal call with strike 1/2
LOG_CALL_REFERENCE = math.exp(-0.5) * _phi_cdf(math.log(2.0)) - 0.5 * _phi_cdf(math.log(2.0) - 1.0)


def payoff_eval(kind: str, x):
    """Test payoffs: "cosine" -> cos(x); "log_call" -> max(e^(x-1) - 1/2, 0)."""
    x = np.asarray(x, dtype=float)
    if kind == "cosine":
        out = np.cos(x)
    elif kind == "log_call":
        out = np.maximum(np.exp(x - 1.0) - 0.5, 0.0)
    else:
        raise ValueError(f"unknown payoff {kind!r}")
    return out if out.ndim else float(out)


def reference_fake_bm(kind: str) -> float:
    """Closed-form references for the sigma = 1, x0 = 0, T = 1 setup.

    cosine: E[cos(W_1)] = e^(-1/2).  log_call: lognormal-call closed form,
    which rounds to 0.269 at three decimals.
    """
    if kind == "cosine":
        return COS_REFERENCE
    if kind == "log_call":
        return LOG_CALL_REFERENCE
    raise ValueError(f"no closed-form fake-BM reference for payoff {kind!r}")


def mc_stats(samples) -> tuple[float, float]:
    """(mean, stderr) with stderr = sample standard deviation / sqrt(n)."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("mc_stats needs a non-empty sample")
    mean = float(np.mean(x))
    if x.size == 1:
        return mean, 0.0
    return mean, float(np.std(x, ddof=1) / math.sqrt(x.size))


def reference_tanh(
    kind: str,
    seed: int,
    n_steps: int = 1000,
    n_paths: int = 1_000_000,
    T: float = 1.0,
    x0: float = 0.0,
) -> tuple[float, float]:
    """High-accuracy Monte Carlo of the target process under the tanh volatility.

    Independent of any xi specification (the target dynamic has none).  The
    defaults exceed the accuracy used for the published error plots; pass
    smaller values for quick runs.
    """
    grid = TimeGrid(T=T, h=T / n_steps)
    vol = LocalVolSpec(variant="tanh")
    terminal = simulate_target(grid, vol, n_paths, seed, x0=x0)
    return mc_stats(payoff_eval(kind, terminal))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment declaration; lists drive the sweep product."""

    scheme: str = "half_step"
    T: float = 1.0
    x0: float = 0.0
    h_list: tuple[float, ...] = (0.02,)
    n_list: tuple[int, ...] = (8000,)
    delta_list: tuple[float, ...] = (0.001,)
    epsilon_rule: str = "h^2"
    payoffs: tuple[str, ...] = ("cosine",)
    seed: int = 7
    strict: bool = False
    fast_path: bool = True
    output_path: str = "sweep.csv"
    # local volatility
    vol_variant: str = "constant"
    vol_value: float = 1.0
    # stochastic volatility
    svol_variant: str = "rough_bergomi"
    rho: float = -0.7
    kappa: float = 1.0
    hurst: float = 0.1
    floor: float = 0.01
    scale: float = 0.5
    two_state_lo: float = 0.5
    two_state_hi: float = 2.0
    c_min: Optional[float] = 0.05
    # reference control: "fake_bm" closed forms, "mc" frozen Monte Carlo
    reference: str = "auto"
    reference_steps: int = 1000
    reference_paths: int = 200_000

    def __post_init__(self):
        if self.scheme not in ("half_step", "nw_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for h in self.h_list:
            TimeGrid(T=self.T, h=h)  # validates integer T/h
        for d in self.delta_list:
            if not 0.0 < d < 0.5:
                raise ValueError(f"delta = {d} outside (0, 1/2)")
        for p in self.payoffs:
            if p not in ("cosine", "log_call"):
                raise ValueError(f"unknown payoff {p!r}")
        if self.scheme == "nw_euler":
            for h in self.h_list:
                if self.epsilon_for(h) > h:
                    raise ValueError("epsilon rule violates epsilon <= h")

    def epsilon_for(self, h: float) -> Optional[float]:
        if self.scheme != "nw_euler":
            return None
        rule = self.epsilon_rule.strip()
        if rule == "h^2":
            return h * h
        if rule == "h":
            return h
        if rule.startswith("const:"):
            return float(rule.split(":", 1)[1])
        raise ValueError(f"unknown epsilon rule {rule!r}")

    def local_vol(self) -> LocalVolSpec:
        if self.vol_variant == "constant":
            return LocalVolSpec(variant="constant", value=self.vol_value)
        if self.vol_variant == "tanh":
            return LocalVolSpec(variant="tanh")
        raise ValueError(f"config cannot build local volatility variant {self.vol_variant!r}")

    def stoch_vol(self) -> StochVolSpec:
        if self.svol_variant == "constant":
            return StochVolSpec(variant="constant", rho=self.rho, kappa=self.kappa)
        if self.svol_variant == "rough_bergomi":
            return StochVolSpec(
                variant="rough_bergomi", rho=self.rho, hurst=self.hurst,
                floor=self.floor, scale=self.scale,
            )
        if self.svol_variant == "two_state":
            return two_state_vol(self.two_state_lo, self.two_state_hi, self.rho)
        raise ValueError(f"config cannot build stochastic volatility variant {self.svol_variant!r}")

    def is_fake_bm(self) -> bool:
        return self.vol_variant == "constant" and self.vol_value == 1.0 and self.x0 == 0.0 and self.T == 1.0


@dataclass(frozen=True)
class SweepResult:
    """One experiment row; abs_error = |estimate - reference| exactly."""

    scheme: str
    payoff: str
    h: float
    N: int
    delta: float
    epsilon: Optional[float]
    seed: int
    estimate: float
    stderr: float
    reference: float
    abs_error: float
    qv_variance: float
    clamp_count: int
    runtime_ms: float


SWEEP_COLUMNS = (
    "scheme", "payoff", "h", "N", "delta", "epsilon", "seed",
    "estimate", "stderr", "reference", "abs_error", "qv_variance",
    "clamp_count", "runtime_ms",
)


def cell_seed(master_seed: int, *coords) -> int:
    """Stable 63-bit seed from the master seed and the cell coordinates."""
    text = repr((int(master_seed),) + tuple(coords))
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _reference_for(config: ExperimentConfig, payoff: str) -> float:
    if config.reference == "fake_bm" or (config.reference == "auto" and config.is_fake_bm()):
        return reference_fake_bm(payoff)
    seed = cell_seed(config.seed, "reference", payoff, config.reference_steps, config.reference_paths)
    value, _ = reference_tanh(
        payoff, seed, n_steps=config.reference_steps, n_paths=config.reference_paths,
        T=config.T, x0=config.x0,
    )
    return value


def run_cell(
    config: ExperimentConfig,
    payoff: str,
    h: float,
    n_particles: int,
    delta: float,
    reference: float,
    timing: bool = True,
) -> SweepResult:
    """Run one sweep cell; failures are recorded as NaN rows and logged."""
    epsilon = config.epsilon_for(h)
    seed = cell_seed(config.seed, config.scheme, payoff, repr(h), n_particles, repr(delta), repr(epsilon))
    t0 = time.perf_counter()
    try:
        spec = RunSpec(
            grid=TimeGrid(T=config.T, h=h),
            vol=config.local_vol(),
            svol=config.stoch_vol(),
            n_particles=n_particles,
            seed=seed,
            delta=delta,
            x0=config.x0,
            c_min=config.c_min,
            epsilon=epsilon,
            strict=config.strict,
            fast=config.fast_path,
        )
        stats, state = run_system(config.scheme, spec)
        estimate, stderr = mc_stats(payoff_eval(payoff, stats.terminal_X))
        qv_var = quad_var_variance(stats) if n_particles >= 2 else float("nan")
        clamp = state.clamp_count
        abs_error = abs(estimate - reference)
    except Exception as exc:  # noqa: BLE001 - failures become in-row NaNs
        log.warning("cell failed (payoff=%s h=%s N=%s delta=%s): %s", payoff, h, n_particles, delta, exc)
        estimate = stderr = abs_error = qv_var = float("nan")
        clamp = -1
    runtime_ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
    return SweepResult(
        scheme=config.scheme, payoff=payoff, h=h, N=n_particles, delta=delta,
        epsilon=epsilon, seed=seed, estimate=estimate, stderr=stderr,
        reference=reference, abs_error=abs_error, qv_variance=qv_var,
        clamp_count=clamp, runtime_ms=runtime_ms,
    )


def sweep_cells(config: ExperimentConfig) -> list[tuple[str, float, int, float]]:
    """Cell coordinates in deterministic configuration order."""
    return [
        (payoff, h, n, d)
        for payoff in config.payoffs
        for h in config.h_list
        for n in config.n_list
        for d in config.delta_list
    ]


def run_sweep(config: ExperimentConfig, threads: int = 1, timing: bool = True) -> list[SweepResult]:
    """All cells of the sweep product, rows in configuration order.

    Cells may execute on a thread pool; the row order and every value except
    runtime_ms are independent of the thread count.
    """
    cells = sweep_cells(config)
    references = {p: _reference_for(config, p) for p in config.payoffs}
    if threads <= 1:
        return [run_cell(config, p, h, n, d, references[p], timing) for (p, h, n, d) in cells]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_cell, config, p, h, n, d, references[p], timing) for (p, h, n, d) in cells]
        return [f.result() for f in futures]


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Plain moving average over `window` consecutive points (len - window + 1 outputs)."""
    x = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError("window must be >= 1")
    if x.size < window:
        raise ValueError("not enough points for the window")
    kernel = np.ones(window) / window
    return np.convolve(x, kernel, mode="valid")


def fit_rate(h_values, errors, window: int = 3) -> float:
    """Slope of log(error) vs log(h) after moving-average smoothing.

    Points are sorted by h and non-positive errors dropped with a log note
    (clamping would fabricate rate data).  Both coordinates are averaged over
    the window, so an exact profile error = f(h) stays on its own curve: in
    particular error = h fits slope one on any grid.  Raises if fewer than two
    usable smoothed points remain.
    """
    h = np.asarray(h_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.shape != e.shape or h.ndim != 1:
        raise ValueError("h_values and errors must be 1-d arrays of equal length")
    keep = e > 0.0
    if np.any(~keep):
        log.info("fit_rate: dropped %d non-positive error value(s)", int(np.count_nonzero(~keep)))
    h, e = h[keep], e[keep]
    order = np.argsort(h, kind="stable")
    h, e = h[order], e[order]
    if h.size - window + 1 < 2:
        raise ValueError("fewer than two usable smoothed points for rate fitting")
    sm_e = moving_average(e, window)
    sm_h = moving_average(h, window)
    slope = float(np.polyfit(np.log(sm_h), np.log(sm_e), 1)[0])
    return slope


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[SweepResult], path: str) -> None:
    """CSV with the exact SweepResult column set, LF endings, round-trip floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])


def read_csv(path: str) -> list[dict]:
    """Rows as dicts with floats/ints restored."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = dict(row)
            for key in ("h", "delta", "estimate", "stderr", "reference", "abs_error", "qv_variance", "runtime_ms"):
                rec[key] = float(rec[key]) if rec[key] != "" else float("nan")
            rec["epsilon"] = float(rec["epsilon"]) if rec["epsilon"] != "" else None
            rec["N"] = int(rec["N"])
            rec["seed"] = int(rec["seed"])
            rec["clamp_count"] = int(rec["clamp_count"])
            out.append(rec)
    return out


def remark_preset(gamma: float, T: float = 1.0) -> dict:
    """Parameter manual for a target error level gamma: h ~ gamma, delta ~ gamma, eps ~ gamma^2."""
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    h = T / math.ceil(T / gamma)
    return {"h": h, "delta": gamma, "epsilon": gamma * gamma}


def _parse_list(text: str, cast):
    return tuple(cast(tok.strip()) for tok in text.split(",") if tok.strip())


def load_config(path: str, env: Optional[dict] = None) -> ExperimentConfig:
    """Read the key = value config file; LSVSIM_SEED in the environment wins over [run] seed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    env = os.environ if env is None else env

    run = parser["run"] if parser.has_section("run") else {}
    lv = parser["local_vol"] if parser.has_section("local_vol") else {}
    sv = parser["stoch_vol"] if parser.has_section("stoch_vol") else {}
    out = parser["output"] if parser.has_section("output") else {}

    def get(section, key, default, cast=str):
        if key in section:
            raw = section[key]
            if cast is bool:
                return str(raw).strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default

    seed = get(run, "seed", 7, int)
    if SEED_ENV_VAR in env:
        seed = int(env[SEED_ENV_VAR])

    svol_variant = get(sv, "variant", "rough_bergomi")
    # rough Bergomi xi is unbounded, so the floor constant cannot come from the
    # bound formula; default to the published experiment override
    c_min_default = 0.05 if svol_variant == "rough_bergomi" else None
    c_min_raw = get(sv, "c_min", None)
    c_min = c_min_default if c_min_raw in (None, "auto") else float(c_min_raw)

    cfg = ExperimentConfig(
        scheme=get(run, "scheme", "half_step"),
        T=get(run, "t", 1.0, float),
        x0=get(run, "x0", 0.0, float),
        h_list=_parse_list(get(run, "h_list", "0.02"), float),
        n_list=_parse_list(get(run, "n_list", "8000"), int),
        delta_list=_parse_list(get(run, "delta_list", "0.001"), float),
        epsilon_rule=get(run, "epsilon_rule", "h^2"),
        payoffs=_parse_list(get(run, "payoffs", "cosine"), str),
        seed=seed,
        strict=get(run, "strict", False, bool),
        fast_path=get(run, "fast_path", True, bool),
        output_path=get(out, "path", "sweep.csv"),
        vol_variant=get(lv, "variant", "constant"),
        vol_value=get(lv, "value", 1.0, float),
        svol_variant=svol_variant,
        rho=get(sv, "rho", -0.7, float),
        kappa=get(sv, "kappa", 1.0, float),
        hurst=get(sv, "h_hurst", 0.1, float),
        floor=get(sv, "floor", 0.01, float),
        scale=get(sv, "scale", 0.5, float),
        two_state_lo=get(sv, "lo", 0.5, float),
        two_state_hi=get(sv, "hi", 2.0, float),
        c_min=c_min,
        reference=get(run, "reference", "auto"),
        reference_steps=get(run, "reference_steps", 1000, int),
        reference_paths=get(run, "reference_paths", 200_000, int),
    )
    return cfg
