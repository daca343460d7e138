"""Command-line interface: run / sweep / rate / selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import engine


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweep cells")
    p.add_argument("--strict", action="store_true", help="abort on model-bound violations")


def _apply_target_error(config, gamma):
    """One-flag parameter manual: h ~ gamma, delta ~ gamma, epsilon ~ gamma^2."""
    preset = engine.remark_preset(gamma, T=config.T)
    return replace(
        config,
        h_list=(preset["h"],),
        delta_list=(preset["delta"],),
        epsilon_rule=f"const:{preset['epsilon']!r}",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsvsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single cell from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--target-error", type=float, metavar="GAMMA",
                       help="override h, delta, epsilon from a target error level")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run the full sweep product to CSV")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", help="output CSV (defaults to [output] path)")
    p_sweep.add_argument("--no-timing", action="store_true",
                         help="write runtime_ms as 0 for byte-reproducible CSVs")
    p_sweep.add_argument("--target-error", type=float, metavar="GAMMA",
                         help="override h, delta, epsilon from a target error level")
    _add_common(p_sweep)

    p_rate = sub.add_parser("rate", help="fit log-log convergence slope from a sweep CSV")
    p_rate.add_argument("--in", dest="infile", required=True)
    p_rate.add_argument("--payoff", required=True)
    p_rate.add_argument("--scheme")
    p_rate.add_argument("--n", type=int, help="restrict to one particle count")
    p_rate.add_argument("--window", type=int, default=3)
    _add_common(p_rate)

    p_self = sub.add_parser("selftest", help="run the built-in invariant suites")
    _add_common(p_self)
    return parser


def _cmd_run(args) -> int:
    config = engine.load_config(args.config)
    if args.strict:
        config = replace(config, strict=True)
    if args.target_error is not None:
        config = _apply_target_error(config, args.target_error)
    for name, values in (("h_list", config.h_list), ("n_list", config.n_list),
                         ("delta_list", config.delta_list), ("payoffs", config.payoffs)):
        if len(values) != 1:
            print(f"run needs a single-cell config; {name} has {len(values)} entries", file=sys.stderr)
            return 2
    rows = engine.run_sweep(config, threads=1)
    row = rows[0]
    for col in engine.SWEEP_COLUMNS:
        print(f"{col} = {getattr(row, col)}")
    return 0


def _cmd_sweep(args) -> int:
    config = engine.load_config(args.config)
    if args.strict:
        config = replace(config, strict=True)
    if args.target_error is not None:
        config = _apply_target_error(config, args.target_error)
    rows = engine.run_sweep(config, threads=args.threads, timing=not args.no_timing)
    out = args.out or config.output_path
    engine.write_csv(rows, out)
    bad = sum(1 for r in rows if np.isnan(r.estimate))
    print(f"wrote {len(rows)} rows to {out}" + (f" ({bad} failed cells)" if bad else ""))
    return 0 if bad == 0 else 1


def _cmd_rate(args) -> int:
    rows = engine.read_csv(args.infile)
    rows = [r for r in rows if r["payoff"] == args.payoff]
    if args.scheme:
        rows = [r for r in rows if r["scheme"] == args.scheme]
    if args.n is not None:
        rows = [r for r in rows if r["N"] == args.n]
    if not rows:
        print("no rows left after filtering", file=sys.stderr)
        return 2
    by_h: dict[float, list[float]] = {}
    for r in rows:
        by_h.setdefault(r["h"], []).append(r["abs_error"])
    hs = sorted(by_h)
    errs = [float(np.mean(by_h[h])) for h in hs]
    slope = engine.fit_rate(np.array(hs), np.array(errs), window=args.window)
    print(f"slope = {slope:.4f} over {len(hs)} step sizes ({len(rows)} rows)")
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "sweep":
        return _cmd_sweep(args)
    if args.command == "rate":
        return _cmd_rate(args)
    if args.command == "selftest":
        from .selftest import run_selftest

        failures = run_selftest()
        print("selftest:", "all checks passed" if failures == 0 else f"{failures} check(s) failed")
        return 0 if failures == 0 else 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
