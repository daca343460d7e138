"""Figure builders over sweep tables.

Four figure kinds mirror the publication plots: error vs number of steps per
particle count (with the dashed h + delta reference), the window-3 moving
average on log-log axes, the quadratic-variation variance, and the
regularisation comparison.  Rendering is deterministic: fixed figure
geometry, pinned fonts, scrubbed metadata, so identical inputs give identical
image bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .io import CsvFormatError, apply_filters, read_rows  # noqa: E402

FIGURE_KINDS = ("error_vs_steps", "loglog_ma", "qv_variance", "delta_compare")

_FIGSIZE = (6.4, 4.8)
_DPI = 110


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csv_path: str
    out_path: str
    payoff: Optional[str] = None
    scheme: Optional[str] = None
    window: int = 3

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; choose from {FIGURE_KINDS}")


def moving_average(values, window: int) -> np.ndarray:
    """Plain moving average, identical to the engine's rate-fit smoothing."""
    x = np.asarray(values, dtype=float)
    if window < 1 or x.size < window:
        raise ValueError("window must be >= 1 and fit the data")
    return np.convolve(x, np.ones(window) / window, mode="valid")


def _series_by(rows: list[dict], key: str) -> dict:
    """Group rows by key, each series sorted by h ascending."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return {
        k: sorted(v, key=lambda r: r["h"])
        for k, v in sorted(groups.items())
    }


def error_vs_steps_data(rows: list[dict]) -> tuple[dict, np.ndarray, np.ndarray, float]:
    """Per-N (steps, abs_error) curves plus the dashed h + delta reference."""
    groups = _series_by(rows, "N")
    deltas = sorted({r["delta"] for r in rows})
    delta = deltas[0]
    hs = np.array(sorted({r["h"] for r in rows}))
    curves = {
        n: (np.array([1.0 / r["h"] for r in series]), np.array([r["abs_error"] for r in series]))
        for n, series in groups.items()
    }
    return curves, 1.0 / hs, hs + delta, delta


def loglog_ma_data(rows: list[dict], window: int) -> dict:
    """Per-N smoothed (h, error) pairs; both coordinates window-averaged."""
    out = {}
    for n, series in _series_by(rows, "N").items():
        h = np.array([r["h"] for r in series])
        e = np.array([r["abs_error"] for r in series])
        keep = e > 0
        h, e = h[keep], e[keep]
        if h.size >= window:
            out[n] = (moving_average(h, window), moving_average(e, window))
    if not out:
        raise CsvFormatError("no series has enough positive errors for the moving average")
    return out


def qv_variance_data(rows: list[dict]) -> dict:
    return {
        n: (np.array([1.0 / r["h"] for r in series]), np.array([r["qv_variance"] for r in series]))
        for n, series in _series_by(rows, "N").items()
    }


def delta_compare_data(rows: list[dict]) -> dict:
    return {
        d: (np.array([1.0 / r["h"] for r in series]), np.array([r["abs_error"] for r in series]))
        for d, series in _series_by(rows, "delta").items()
    }


def render(spec: FigureSpec) -> str:
    """Build one figure from the CSV and write it; returns the output path."""
    rows = apply_filters(read_rows(spec.csv_path), payoff=spec.payoff, scheme=spec.scheme)
    with plt.rc_context({
        "font.family": "DejaVu Sans",
        "svg.hashsalt": "figkit",
        "figure.figsize": _FIGSIZE,
        "figure.dpi": _DPI,
        "savefig.dpi": _DPI,
    }):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "error_vs_steps":
                curves, ref_steps, ref_vals, delta = error_vs_steps_data(rows)
                for n, (steps, errs) in curves.items():
                    ax.plot(steps, errs, marker="o", markersize=2.5, linewidth=1.0, label=f"N = {n}")
                ax.plot(ref_steps, ref_vals, "r--", linewidth=1.2, label=f"h + {delta:g}")
                ax.set_xlabel("number of steps")
                ax.set_ylabel("absolute error")
            elif spec.kind == "loglog_ma":
                for n, (h, e) in loglog_ma_data(rows, spec.window).items():
                    ax.plot(h, e, marker="o", markersize=2.5, linewidth=1.0, label=f"N = {n}")
                ax.set_xscale("log")
                ax.set_yscale("log")
                ax.set_xlabel("step size h")
                ax.set_ylabel(f"moving average error (window {spec.window})")
            elif spec.kind == "qv_variance":
                for n, (steps, qv) in qv_variance_data(rows).items():
                    ax.plot(steps, qv, marker="o", markersize=2.5, linewidth=1.0, label=f"N = {n}")
                ax.set_xlabel("number of steps")
                ax.set_ylabel("variance of quadratic variation")
                ax.set_ylim(bottom=0.0)
            else:  # delta_compare
                for d, (steps, errs) in delta_compare_data(rows).items():
                    ax.plot(steps, errs, marker="o", markersize=2.5, linewidth=1.0, label=f"delta = {d:g}")
                ax.set_xlabel("number of steps")
                ax.set_ylabel("absolute error")
            ax.legend(fontsize=8)
            ax.grid(True, alpha=0.3)
            fig.tight_layout()
            if spec.out_path.endswith(".svg"):
                fig.savefig(spec.out_path, metadata={"Date": None})
            else:
                fig.savefig(spec.out_path, metadata={"Software": None})
        finally:
            plt.close(fig)
    return spec.out_path
