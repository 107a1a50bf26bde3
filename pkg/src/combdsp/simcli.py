"""Command-line interface: single cells, sweeps, DD-window calibration, selftest.

Verbs:
    run                one cell -> results.csv + meta.txt
    sweep              profile/config grid -> results.csv, fig2a.svg, fig2b.svg, meta.txt
    calibrate-window   DD-window grid search on one cell
    selftest           property suite, one pass/fail line per check
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import yaml

from . import __version__
from .errors import ParameterError
from .runner import (ResultRow, RunConfig, SweepConfig, calibrate_window,
                     fill_gains, profile_by_name, run_cell, run_sweep,
                     write_csv, write_meta)


def _set_path(obj, parts: list[str], value):
    """Rebuild nested (frozen) dataclasses with one field replaced."""
    name = parts[0]
    if not hasattr(obj, name):
        raise ParameterError(f"unknown config field {name!r} on {type(obj).__name__}")
    if len(parts) == 1:
        return dataclasses.replace(obj, **{name: value})
    child = _set_path(getattr(obj, name), parts[1:], value)
    return dataclasses.replace(obj, **{name: child})


def _apply_overrides(obj, overrides: dict):
    for key, value in overrides.items():
        if dataclasses.is_dataclass(value.__class__) or not isinstance(value, dict):
            obj = _set_path(obj, key.split("."), value)
        else:  # nested mapping from a YAML config file
            for sub, v in _flatten(value, key):
                obj = _set_path(obj, sub.split("."), v)
    return obj


def _flatten(d: dict, prefix: str):
    for k, v in d.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            yield from _flatten(v, key)
        else:
            yield key, v


def _collect_overrides(args) -> dict:
    overrides = {}
    if args.config:
        loaded = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ParameterError("config file must contain a mapping")
        overrides.update(loaded)
    for item in args.set or []:
        if "=" not in item:
            raise ParameterError(f"--set expects k=v, got {item!r}")
        k, v = item.split("=", 1)
        parsed = yaml.safe_load(v)
        if isinstance(parsed, str):
            # YAML 1.1 misses floats like "1.0e8" (no signed exponent)
            try:
                parsed = float(parsed)
            except ValueError:
                pass
        overrides[k.strip()] = parsed
    return overrides


def _build_run_config(args) -> RunConfig:
    cfg = profile_by_name(args.profile).base if args.profile else RunConfig()
    cfg = _apply_overrides(cfg, _collect_overrides(args))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _build_run_config(args)
    t0 = time.perf_counter()
    row = run_cell(cfg)
    elapsed = time.perf_counter() - t0
    # wall-clock time is reported here, not persisted, so identical runs
    # produce byte-identical CSV output
    row.runtime_s = 0.0
    fill_gains([row])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv([row], out / "results.csv")
    write_meta(SweepConfig(base=cfg, formats=[cfg.fmt], schemes=[cfg.scheme],
                           n_r_values=[cfg.n_r], distances_km=[cfg.distance_km],
                           seeds=[cfg.seed], jobs=1), out / "meta.txt")
    print(f"{cfg.distance_km:g} km {cfg.fmt} {cfg.scheme} n_r={cfg.n_r} "
          f"seed={cfg.seed}: ngmi {row.ngmi_mean:.4f} r_net {row.r_net:.4f} "
          f"({elapsed:.1f} s)")
    return 0


def _cmd_sweep(args) -> int:
    sweep = profile_by_name(args.profile or "desk")
    overrides = _collect_overrides(args)
    sweep = _apply_overrides(sweep, overrides)
    if args.jobs:
        sweep = dataclasses.replace(sweep, jobs=args.jobs)
    if args.seed is not None:
        sweep = dataclasses.replace(sweep, seeds=[args.seed])

    def progress(i, total, row: ResultRow):
        status = row.error or f"ngmi {row.ngmi_mean:.4f} r_net {row.r_net:.4f}"
        print(f"[{i}/{total}] {row.distance_km:g} km {row.format} {row.scheme} "
              f"n_r={row.n_r} seed={row.seed}: {status}", flush=True)

    rows = run_sweep(sweep, args.out, progress=progress)
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} cells, {failed} failed -> {args.out}")
    return 1 if failed else 0


def _cmd_calibrate(args) -> int:
    cfg = _build_run_config(args)
    best, scores = calibrate_window(cfg)
    for w in sorted(scores):
        mark = " <- best" if w == best else ""
        print(f"dd_window {w:4d}: ngmi {scores[w]:.5f}{mark}")
    print(f"best dd_window: {best}")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftests

    ok = True
    for name, passed, detail in run_selftests():
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    print("selftest:", "all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="combdsp",
                                 description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, fn in (("run", _cmd_run), ("sweep", _cmd_sweep),
                     ("calibrate-window", _cmd_calibrate),
                     ("selftest", _cmd_selftest)):
        p = sub.add_parser(verb)
        p.add_argument("--config", help="YAML file with config overrides")
        p.add_argument("--profile", choices=("desk", "paper"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, help="parallel workers (sweep)")
        p.add_argument("--set", action="append", metavar="K=V",
                       help="override a (dotted) config field, YAML-parsed value")
        p.set_defaults(fn=fn)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
