"""Conditional second-moment estimators and their test oracle.

Two estimator families over an atomic sample of (xi^2, position) pairs:

  - Gaussian-mixture ratio ("psi"): weights are centered Gaussian densities of
    variance lam; with delta = 0 this ratio IS the conditional expectation of
    xi^2 given position + sqrt(lam) * G for an independent standard normal G.
  - Regularised Nadaraya-Watson ratio ("nw"): weights come from a compactly
    supported kernel of bandwidth epsilon.

Both ratios add the same regularisation constant delta to numerator and
denominator, so outputs stay inside [min(xi^2, 1), max(xi^2, 1)].

Numerics: Gaussian weights are evaluated in log space and combined with a
max-shifted exponential, because lam of order 1e-5 underflows the raw density
a fraction of a unit away from the atoms.  Atom sums use numpy's pairwise
summation in index order; the windowed fast paths sum in sorted-position
order, which agrees with the exact path to ~1e-13 relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .stochastic import log_gaussian_pdf

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None
    HAVE_NUMBA = False

__all__ = [
    "SingularEstimatorError",
    "WeightedSample",
    "KernelSpec",
    "psi_value",
    "psi_inverse_sqrt",
    "psi_batch",
    "nw_estimate",
    "nw_batch",
    "cond_exp_oracle",
    "lipschitz_probe",
    "psi_lipschitz_bound",
    "nw_lipschitz_bound",
]

# Floor for the Gaussian window half-width, in units of sqrt(lam).  The
# actual width is enlarged until the mass dropped outside the window is
# provably below _WINDOW_TRUNC_TOL of the smallest value the regularised
# ratio can take, so windowing never costs more than ~1e-13 relative.
PSI_WINDOW_SIGMAS = 9.0
_WINDOW_TRUNC_TOL = 1e-13


class SingularEstimatorError(ValueError):
    """Raised when delta = 0 leaves both ratio sums without any mass."""


@dataclass(frozen=True)
class WeightedSample:
    """Atomic joint law of (xi^2, conditioning position)."""

    xi_sq: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        xi_sq = np.ascontiguousarray(np.asarray(self.xi_sq, dtype=float))
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        if xi_sq.ndim != 1 or pos.ndim != 1 or xi_sq.shape != pos.shape:
            raise ValueError("xi_sq and positions must be 1-d arrays of equal length")
        if xi_sq.size < 1:
            raise ValueError("sample must hold at least one atom")
        if np.any(xi_sq < 0):
            raise ValueError("xi_sq entries must be non-negative")
        object.__setattr__(self, "xi_sq", xi_sq)
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.xi_sq.size


def _quartic(u: np.ndarray) -> np.ndarray:
    return np.maximum(1.0 - u * u, 0.0) ** 2


# max |K_1'| of the quartic kernel: attained at u = 1/sqrt(3)
_QUARTIC_DERIV_SUP = 8.0 / (3.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class KernelSpec:
    """Compact-support kernel K_eps(x) = K_1(x / eps) / eps.

    shape "quartic" uses K_1(u) = max(1 - u^2, 0)^2.  A user-supplied K_1 is
    checked numerically at construction on a 10^4-point grid for compact
    support in [-1, 1], a continuous derivative, and a positive floor on
    (-1/2, 1/2).
    """

    epsilon: float
    shape: str = "quartic"
    k1: Optional[callable] = None
    k1_deriv_sup: Optional[float] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.shape == "quartic":
            object.__setattr__(self, "k1", _quartic)
            object.__setattr__(self, "k1_deriv_sup", _QUARTIC_DERIV_SUP)
        elif self.shape == "user":
            if self.k1 is None:
                raise ValueError("user kernel requires k1")
            self._validate_user_kernel()
        else:
            raise ValueError(f"unknown kernel shape {self.shape!r}")

    def _validate_user_kernel(self):
        grid = np.linspace(-2.0, 2.0, 10_000)
        vals = np.asarray(self.k1(grid), dtype=float)
        if np.any(vals < 0):
            raise ValueError("kernel must be non-negative")
        outside = np.abs(grid) > 1.0
        if np.any(vals[outside] != 0.0):
            raise ValueError("kernel support must lie inside [-1, 1]")
        inner = np.abs(grid) < 0.5
        if vals[inner].min() <= 0.0:
            raise ValueError("kernel must be bounded below by a positive constant on (-1/2, 1/2)")
        # continuous derivative: successive finite-difference slopes may not jump
        slopes = np.diff(vals) / np.diff(grid)
        if np.max(np.abs(np.diff(slopes))) > 50.0 * (grid[1] - grid[0]) * max(1.0, np.max(np.abs(slopes))):
            raise ValueError("kernel derivative looks discontinuous on the check grid")
        if self.k1_deriv_sup is None:
            object.__setattr__(self, "k1_deriv_sup", float(np.max(np.abs(slopes))))

    def weight(self, x) -> np.ndarray:
        """K_eps(x) with the L1 scaling K_1(x / eps) / eps."""
        return self.k1(np.asarray(x, dtype=float) / self.epsilon) / self.epsilon

    def deriv_sup(self) -> float:
        """sup |K_eps'| = sup |K_1'| / eps^2."""
        return self.k1_deriv_sup / (self.epsilon * self.epsilon)


def _clip_range(xi_sq: np.ndarray, delta: float) -> tuple[float, float]:
    # The ratio is a convex combination of the atoms' xi^2 values and (for
    # delta > 0) the constant 1; clip only guards against sub-ulp float drift.
    lo = float(xi_sq.min())
    hi = float(xi_sq.max())
    if delta > 0.0:
        lo = min(lo, 1.0)
        hi = max(hi, 1.0)
    return lo, hi


def _psi_exact(queries: np.ndarray, sample: WeightedSample, lam: float, delta: float) -> np.ndarray:
    """Gaussian-mixture ratio at each query; log-space weights, index-order sums."""
    n = sample.count
    out = np.empty(queries.shape)
    # chunk queries so the (chunk x n) weight matrix stays small
    chunk = max(1, int(4_000_000 // max(n, 1)))
    for start in range(0, queries.size, chunk):
        q = queries[start : start + chunk]
        logw = log_gaussian_pdf(q[:, None] - sample.positions[None, :], lam)
        shift = np.max(logw, axis=1)
        dead = ~np.isfinite(shift)
        if np.any(dead) and delta == 0.0:
            raise SingularEstimatorError("all Gaussian weights vanished and delta = 0")
        shift = np.where(dead, 0.0, shift)
        w = np.exp(logw - shift[:, None])
        num_s = w @ sample.xi_sq
        den_s = np.sum(w, axis=1)
        if delta == 0.0:
            vals = num_s / den_s
        else:
            scale = np.exp(shift) / n  # absolute mean weight = scale * shifted sum
            vals = (scale * num_s + delta) / (scale * den_s + delta)
            vals = np.where(dead, 1.0, vals)
        out[start : start + chunk] = vals
    lo, hi = _clip_range(sample.xi_sq, delta)
    return np.clip(out, lo, hi)


def psi_value(y, sample: WeightedSample, lam: float, delta: float, j: int):
    """Psi_j(y, sample): regularised Gaussian-mixture conditional second moment.

    For j = 0 the estimator ignores y and returns the sample mean of xi^2.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if j < 0:
        raise ValueError("step index must be >= 0")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if j == 0:
        vals = np.full(y_arr.shape, float(np.mean(sample.xi_sq)))
    else:
        vals = _psi_exact(y_arr, sample, lam, delta)
    return vals if np.asarray(y).ndim else float(vals[0])


def psi_inverse_sqrt(y, sample: WeightedSample, lam: float, delta: float, j: int):
    """Psi_j(y, sample)^(-1/2), the factor multiplying the diffusion term."""
    vals = psi_value(y, sample, lam, delta, j)
    return 1.0 / np.sqrt(vals)


def _window_sums_np(queries, pos_sorted, xi_sorted, half_width, weight_of):
    """Flat windowed weight sums per query: (num, den, counts)."""
    lo = np.searchsorted(pos_sorted, queries - half_width, side="left")
    hi = np.searchsorted(pos_sorted, queries + half_width, side="right")
    counts = hi - lo
    total = int(counts.sum())
    num = np.zeros(queries.shape)
    den = np.zeros(queries.shape)
    if total > 0:
        seg_starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        flat = np.repeat(lo - seg_starts, counts) + np.arange(total)
        dists = np.repeat(queries, counts) - pos_sorted[flat]
        w = weight_of(dists)
        red_idx = np.minimum(seg_starts, total - 1)
        num = np.add.reduceat(w * xi_sorted[flat], red_idx)
        den = np.add.reduceat(w, red_idx)
        num[counts == 0] = 0.0
        den[counts == 0] = 0.0
    return num, den, counts


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _window_sums_nb(queries, pos_sorted, xi_sorted, half_width, kind, param):  # pragma: no cover - jitted
        n = pos_sorted.shape[0]
        m = queries.shape[0]
        num = np.zeros(m)
        den = np.zeros(m)
        counts = np.zeros(m, np.int64)
        for i in range(m):
            qi = queries[i]
            a = qi - half_width
            b = qi + half_width
            lo, hi = 0, n
            while lo < hi:  # bisect_left for a
                mid = (lo + hi) // 2
                if pos_sorted[mid] < a:
                    lo = mid + 1
                else:
                    hi = mid
            left = lo
            lo, hi = left, n
            while lo < hi:  # bisect_right for b
                mid = (lo + hi) // 2
                if pos_sorted[mid] <= b:
                    lo = mid + 1
                else:
                    hi = mid
            right = lo
            sn = 0.0
            sd = 0.0
            for k in range(left, right):
                d = qi - pos_sorted[k]
                if kind == 0:  # Gaussian, unnormalised
                    w = math.exp(-d * d / (2.0 * param))
                else:  # quartic, includes the 1/eps scaling
                    u = d / param
                    t = 1.0 - u * u
                    w = t * t / param if t > 0.0 else 0.0
                sd += w
                sn += w * xi_sorted[k]
            num[i] = sn
            den[i] = sd
            counts[i] = right - left
        return num, den, counts


def _segment_ratio(
    queries: np.ndarray,
    pos_sorted: np.ndarray,
    xi_sorted: np.ndarray,
    half_width: float,
    delta: float,
    kind: str,
    param: float,
    weight_of,
    mean_weight_scale: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Windowed ratio per query; returns (values, empty_window_mask).

    Contributions outside [query - half_width, query + half_width] are
    dropped; the ratio is (mean num + delta) / (mean den + delta) with means
    over the FULL sample size (dropped atoms count as zero weight).  kind
    "gauss" / "quartic" run a compiled two-pointer loop when numba is present;
    any other kind uses weight_of through the numpy path.
    """
    n = pos_sorted.size
    if HAVE_NUMBA and kind in ("gauss", "quartic"):
        num, den, counts = _window_sums_nb(
            queries, pos_sorted, xi_sorted, half_width, 0 if kind == "gauss" else 1, param
        )
    else:
        num, den, counts = _window_sums_np(queries, pos_sorted, xi_sorted, half_width, weight_of)
    empty = counts == 0
    vals = np.full(queries.shape, 1.0 if delta > 0.0 else np.nan)
    num = num * (mean_weight_scale / n) + delta
    den = den * (mean_weight_scale / n) + delta
    good = ~empty
    with np.errstate(invalid="ignore", divide="ignore"):
        vals[good] = num[good] / den[good]
    return vals, empty


def _psi_window_width(lam: float, delta: float, lo: float, hi: float, span: float) -> float:
    """Half-width making the truncated mass irrelevant against the delta floor.

    The ratio denominator is at least delta and the result at least lo, so
    dropping total weight below _WINDOW_TRUNC_TOL * delta * lo / (hi + max xi^2)
    perturbs the value by under ~1e-13 relative, for any query placement.
    """
    pref = 1.0 / math.sqrt(2.0 * math.pi * lam)
    floor = max(lo, 1e-300)
    budget = _WINDOW_TRUNC_TOL * delta * floor / (2.0 * hi)
    arg = pref / budget
    if arg <= 1.0:
        width = PSI_WINDOW_SIGMAS * math.sqrt(lam)
    else:
        width = max(PSI_WINDOW_SIGMAS * math.sqrt(lam), math.sqrt(2.0 * lam * math.log(arg)))
    return min(width, span + math.sqrt(lam))


def psi_batch(
    queries,
    sample: WeightedSample,
    lam: float,
    delta: float,
    j: int,
    fast: bool = True,
) -> np.ndarray:
    """Vectorised Psi_j over many query points.

    Degenerate samples short-circuit exactly: constant xi^2 = k^2 gives k^2
    when delta = 0 (proportional sums) and 1 when k = 1 (identical sums).
    For delta > 0 the evaluation is windowed around each query with a width
    that provably keeps the truncation below ~1e-13 relative; delta = 0 has
    no such guarantee (a far atom can carry all the mass), so it always runs
    the exact log-space path.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    q = np.ascontiguousarray(np.asarray(queries, dtype=float))
    if j == 0:
        return np.full(q.shape, float(np.mean(sample.xi_sq)))
    xi_sq = sample.xi_sq
    lo_v = float(xi_sq.min())
    hi_v = float(xi_sq.max())
    if lo_v == hi_v and (delta == 0.0 or lo_v == 1.0):
        return np.full(q.shape, lo_v if delta == 0.0 else 1.0)
    if not fast or delta == 0.0:
        return _psi_exact(q, sample, lam, delta)
    order = np.argsort(sample.positions, kind="stable")
    pos_sorted = sample.positions[order]
    xi_sorted = xi_sq[order]
    lo, hi = _clip_range(xi_sq, delta)
    span = float(pos_sorted[-1] - pos_sorted[0])
    width = _psi_window_width(lam, delta, lo, hi, span)
    pref = 1.0 / np.sqrt(2.0 * np.pi * lam)

    def weight_of(d):
        return np.exp(-d * d / (2.0 * lam))

    vals, _ = _segment_ratio(
        q, pos_sorted, xi_sorted, width, delta, "gauss", lam, weight_of, pref
    )
    return np.clip(vals, lo, hi)


def nw_estimate(y, sample: WeightedSample, kernel: KernelSpec, delta: float, j: int):
    """Regularised Nadaraya-Watson estimate of the conditional second moment.

    For j = 0 returns the sample mean of xi^2.  With delta = 0 a query farther
    than the bandwidth from every atom has no defined value and raises.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if j < 0:
        raise ValueError("step index must be >= 0")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if j == 0:
        vals = np.full(y_arr.shape, float(np.mean(sample.xi_sq)))
        return vals if np.asarray(y).ndim else float(vals[0])
    vals = nw_batch(y_arr, sample, kernel, delta, j)
    return vals if np.asarray(y).ndim else float(vals[0])


def nw_batch(
    queries,
    sample: WeightedSample,
    kernel: KernelSpec,
    delta: float,
    j: int,
) -> np.ndarray:
    """Vectorised Nadaraya-Watson ratio; compact support makes the window exact.

    Constant samples short-circuit like the Gaussian ratio: xi^2 = k^2 with
    delta = 0 gives the ratio's constant value k^2 (its continuous extension
    where both sums vanish), and k = 1 gives 1 for any delta.
    """
    q = np.ascontiguousarray(np.asarray(queries, dtype=float))
    if j == 0:
        return np.full(q.shape, float(np.mean(sample.xi_sq)))
    xi_sq = sample.xi_sq
    lo_v = float(xi_sq.min())
    hi_v = float(xi_sq.max())
    if lo_v == hi_v and (delta == 0.0 or lo_v == 1.0):
        return np.full(q.shape, lo_v if delta == 0.0 else 1.0)
    order = np.argsort(sample.positions, kind="stable")
    pos_sorted = sample.positions[order]
    xi_sorted = xi_sq[order]
    kind = "quartic" if kernel.shape == "quartic" else "custom"
    vals, empty = _segment_ratio(
        q, pos_sorted, xi_sorted, kernel.epsilon, delta, kind, kernel.epsilon, kernel.weight, 1.0
    )
    if delta == 0.0 and np.any(empty):
        raise SingularEstimatorError(
            f"{int(empty.sum())} query point(s) farther than epsilon from every atom with delta = 0"
        )
    # delta = 0 can still zero both sums at the support boundary
    if delta == 0.0 and np.any(~np.isfinite(vals)):
        raise SingularEstimatorError("kernel weights vanished at the support boundary with delta = 0")
    lo, hi = _clip_range(xi_sq, delta)
    return np.clip(vals, lo, hi)


def cond_exp_oracle(atoms: WeightedSample, lam: float, x) -> float | np.ndarray:
    """Exact conditional expectation E[xi^2 | pos + sqrt(lam) G = x] for atomic laws.

    Independent test oracle: direct atomic ratio evaluated with extended
    precision accumulation; both sums are rescaled by the same positive
    constant (max exponent) before exponentiation, which leaves the ratio
    unchanged while avoiding underflow.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    xs = atoms.positions.astype(np.longdouble)
    x2 = atoms.xi_sq.astype(np.longdouble)
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.longdouble))
    expo = -((x_arr[:, None] - xs[None, :]) ** 2) / (np.longdouble(2) * np.longdouble(lam))
    expo = expo - expo.max(axis=1)[:, None]
    w = np.exp(expo)
    vals = (w @ x2) / w.sum(axis=1)
    out = vals.astype(float)
    return out if np.asarray(x).ndim else float(out[0])


def psi_lipschitz_bound(lam: float, delta: float, gamma: float = 1.0 / 3.0) -> float:
    """Theoretical Lipschitz bound for y -> Psi^(-1/2), up to a hidden constant."""
    if delta <= 0:
        raise ValueError("bound requires delta > 0")
    return gamma ** (-0.5) * lam ** (-(1.0 + gamma) / 2.0) * delta ** (-gamma)


def nw_lipschitz_bound(kernel: KernelSpec, delta: float) -> float:
    """Lipschitz cap for y -> NW^(-1/2): sup|K_eps'| / delta."""
    if delta <= 0:
        raise ValueError("bound requires delta > 0")
    return kernel.deriv_sup() / delta


def lipschitz_probe(
    estimator: str,
    sample: WeightedSample,
    lam: Optional[float] = None,
    delta: float = 0.0,
    kernel: Optional[KernelSpec] = None,
    n_grid: int = 10_000,
) -> float:
    """Empirical Lipschitz constant of y -> estimator(y)^(-1/2) on a dense grid.

    The grid spans the sample positions extended by 3 sqrt(lam) (psi) or
    3 epsilon (nw); returns the max finite-difference slope.
    """
    if estimator == "psi":
        if lam is None:
            raise ValueError("psi probe requires lam")
        pad = 3.0 * np.sqrt(lam)
    elif estimator == "nw":
        if kernel is None:
            raise ValueError("nw probe requires kernel")
        pad = 3.0 * kernel.epsilon
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    grid = np.linspace(sample.positions.min() - pad, sample.positions.max() + pad, n_grid)
    if estimator == "psi":
        vals = psi_batch(grid, sample, lam, delta, j=1, fast=False)
    else:
        vals = nw_batch(grid, sample, kernel, delta, j=1)
    f = 1.0 / np.sqrt(vals)
    slopes = np.abs(np.diff(f)) / np.diff(grid)
    return float(slopes.max())
