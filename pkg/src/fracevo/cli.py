"""Command-line front end: ``fracevo run | verify | sweep``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 solver failure.
The default output root is ``$FRACEVO_OUT`` (falling back to ``./fracevo-out``).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pydantic
import tomli

from . import __version__, abstractcore
from .config import RunConfig, load_config, resolved_dict
from .stepper import NonConvergence, TrajectoryRecord, estimate_decay_exponent, solve_deterministic
from .stochastic import monte_carlo_moments, solve_spde
from .verify import SUITES, run_verify

OUT_ENV = "FRACEVO_OUT"
EXIT_OK, EXIT_VERIFY, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3
SWEEP_AXES = ("beta", "gamma", "dt", "p", "alpha_frac")


class InputError(Exception):
    """Anything that should map to exit code 2."""


@dataclass
class RunResult:
    directory: Path
    final_norm_h: float
    final_norm_v: float
    decay_exponent: float
    final_state: Optional[np.ndarray]


def _out_root(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "fracevo-out")


def _load(path: str, seed: Optional[int]) -> tuple[RunConfig, Path]:
    p = Path(path)
    try:
        cfg = load_config(p)
        data = resolved_dict(cfg)
        if data["initial"]["profile"] == "file":
            # pin the data file so the resolved config is location independent
            data["initial"]["path"] = str((p.parent / data["initial"]["path"]).resolve())
        if seed is not None:
            data["seed"] = seed
        return RunConfig.model_validate(data), p
    except FileNotFoundError as exc:
        raise InputError(f"config not found: {p}") from exc
    except (pydantic.ValidationError, tomli.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"invalid config {p}: {exc}") from exc


def _csv_header(cfg: RunConfig, kind: str) -> str:
    return (f"# fracevo {__version__} {kind}\n"
            f"# equation={cfg.equation.value} beta={cfg.beta!r} T={cfg.T!r} dt={cfg.dt!r} "
            f"scheme={cfg.scheme.value} seed={cfg.seed}\n")


def _write(directory: Path, name: str, data: str | bytes) -> None:
    path = directory / name
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data, encoding="utf-8")


def execute(cfg: RunConfig, directory: Path, source: Optional[Path] = None, threads: int = 1) -> RunResult:
    """Solve per ``cfg`` and write artifacts into ``directory``."""
    try:
        problem = cfg.problem()
        solver = cfg.solver_config()
        noise = cfg.noise_spec()
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from exc
    directory.mkdir(parents=True, exist_ok=True)

    meta = {"version": __version__, "seed": cfg.seed,
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "source": str(source) if source else None, "config": resolved_dict(cfg)}
    state: Optional[np.ndarray] = None
    if noise is not None and cfg.noise.paths > 1:
        stats = monte_carlo_moments(problem, noise, solver, cfg.noise.paths, cfg.seed, threads=threads)
        _write(directory, "moments.csv", _csv_header(cfg, "moments") + stats.to_csv())
        meta.update(mode="monte_carlo", n_ok=stats.n_ok, n_fail=stats.n_fail)
        norms = stats.mean_norm_h
        final_h, final_v = float(norms[-1]), math.nan
        rec = TrajectoryRecord(stats.times, stats.mean_state, np.zeros(len(norms), int), np.zeros(len(norms)),
                               norms, np.full(len(norms), math.nan), cfg.beta, cfg.dt)
        state = stats.mean_state[-1]
    else:
        if noise is not None:
            rec = solve_spde(problem, noise, solver, cfg.seed)
            meta["mode"] = "stochastic_path"
        else:
            rec = solve_deterministic(problem, solver)
            meta["mode"] = "deterministic"
        _write(directory, "trajectory.csv", _csv_header(cfg, "trajectory") + rec.to_csv())
        if cfg.binary_dump:
            _write(directory, "states.bin", rec.to_bytes())
        final_h, final_v = float(rec.norm_h[-1]), float(rec.norm_v[-1])
        state = rec.states[-1]
    try:
        decay = estimate_decay_exponent(rec).exponent
    except ValueError:
        decay = math.nan
    meta.update(final_norm_H=final_h, final_norm_V=final_v, decay_exponent=decay)
    _write(directory, "config.json", json.dumps(resolved_dict(cfg), indent=2, sort_keys=True) + "\n")
    _write(directory, "metadata.json", json.dumps(meta, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return RunResult(directory, final_h, final_v, decay, state)


def _run_name(cfg: RunConfig, source: Path) -> str:
    return cfg.name or source.stem


def cmd_run(args) -> int:
    cfg, source = _load(args.config, args.seed)
    root = Path(args.out) if args.out else (Path(cfg.output_dir) if cfg.output_dir else _out_root(None))
    res = execute(cfg, root / _run_name(cfg, source), source, threads=args.threads)
    print(f"wrote {res.directory}  final |u|_H = {res.final_norm_h:.6e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_verify(args.suite, seed=args.seed or 0)
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out, f"verify_{args.suite}.csv", report.to_csv())
    return EXIT_OK if report.passed else EXIT_VERIFY


def _parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"--values must be numbers: {text!r}") from exc
    if not values:
        raise InputError("--values is empty")
    return values


def _with_axis(cfg: RunConfig, axis: str, value: float) -> RunConfig:
    data = resolved_dict(cfg)
    if axis in ("beta", "dt"):
        data[axis] = value
    elif axis == "gamma":
        if data.get("noise") is None:
            raise InputError("sweeping gamma needs a [noise] block")
        data["noise"]["gamma"] = value
    else:
        data["triple"][axis] = value
    try:
        return RunConfig.model_validate(data)
    except pydantic.ValidationError as exc:
        raise InputError(f"{axis}={value}: {exc}") from exc


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise InputError(f"--axis must be one of {', '.join(SWEEP_AXES)}")
    values = _parse_values(args.values)
    cfg, source = _load(args.config, args.seed)
    configs = [_with_axis(cfg, args.axis, v) for v in values]
    root = Path(args.out) if args.out else (Path(cfg.output_dir) if cfg.output_dir else _out_root(None))
    base = root / f"{_run_name(cfg, source)}-sweep-{args.axis}"

    def one(item):
        v, c = item
        return execute(c, base / f"{args.axis}={v!r}", source)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(one, zip(values, configs)))

    order = math.nan
    if args.axis == "dt" and len(values) >= 3:
        ranked = sorted(zip(values, results), key=lambda vr: vr[0])
        ref = ranked[0][1].final_state
        triple = cfg.triple_spec()
        dts = np.array([v for v, _ in ranked[1:]])
        errs = np.array([triple.h_norm(r.final_state - ref) for _, r in ranked[1:]])
        if np.all(errs > 0):
            order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])

    buf = io.StringIO()
    buf.write(_csv_header(cfg, f"sweep axis={args.axis}"))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([args.axis, "final_norm_H", "final_norm_V", "decay_exponent", "observed_order"])
    for v, r in zip(values, results):
        w.writerow([repr(v), repr(r.final_norm_h), repr(r.final_norm_v), repr(r.decay_exponent), repr(order)])
    base.mkdir(parents=True, exist_ok=True)
    _write(base, "summary.csv", buf.getvalue())
    print(f"wrote {base / 'summary.csv'}" + (f"  observed order {order:.3f}" if math.isfinite(order) else ""))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
    common.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./fracevo-out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps and Monte Carlo")

    parser = argparse.ArgumentParser(prog="fracevo", description="Time-fractional evolution solver")
    parser.add_argument("--version", action="version", version=f"fracevo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="solve the problem described by a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", parents=[common], help="run a property suite")
    p.add_argument("suite", choices=[*SUITES, "all"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="rerun a config across values of one parameter")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma or space separated numbers")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NonConvergence, abstractcore.NonConvergence) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RuntimeError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
