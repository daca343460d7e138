"""Sweep CSV parsing with column validation and filter predicates."""

from __future__ import annotations

import csv

REQUIRED_COLUMNS = (
    "scheme", "payoff", "h", "N", "delta", "epsilon", "seed",
    "estimate", "stderr", "reference", "abs_error", "qv_variance",
    "clamp_count", "runtime_ms",
)

_FLOAT_COLUMNS = ("h", "delta", "estimate", "stderr", "reference", "abs_error", "qv_variance", "runtime_ms")
_INT_COLUMNS = ("N", "seed", "clamp_count")


class CsvFormatError(ValueError):
    """The input file does not follow the sweep CSV contract."""


def read_rows(path: str) -> list[dict]:
    """Parse a sweep CSV; raises CsvFormatError naming any missing column."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise CsvFormatError(f"{path}: missing required column(s) {', '.join(missing)}")
        rows = []
        for raw in reader:
            rec = dict(raw)
            for key in _FLOAT_COLUMNS:
                rec[key] = float(rec[key]) if rec[key] != "" else float("nan")
            for key in _INT_COLUMNS:
                rec[key] = int(rec[key])
            rec["epsilon"] = float(rec["epsilon"]) if rec["epsilon"] != "" else None
            rows.append(rec)
    if not rows:
        raise CsvFormatError(f"{path}: no data rows")
    return rows


def apply_filters(rows: list[dict], payoff: str | None = None, scheme: str | None = None) -> list[dict]:
    """Filter rows; raises CsvFormatError naming the filter that emptied the set."""
    out = rows
    if payoff is not None:
        out = [r for r in out if r["payoff"] == payoff]
        if not out:
            raise CsvFormatError(f"filter payoff={payoff!r} left no rows")
    if scheme is not None:
        out = [r for r in out if r["scheme"] == scheme]
        if not out:
            raise CsvFormatError(f"filter scheme={scheme!r} left no rows")
    return out
