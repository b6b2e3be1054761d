"""Command line entry point: ``wienerbayes {estimate,design,benchmark,validate}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .active import OptimizationError, optimize_inputs
from .benchmarks import BenchmarkResult, run_benchmark
from .config import ConfigError, ExperimentConfig, parse_config
from .estimators import NotPositiveDefiniteError
from .io import emit_results, format_cell, library_version, write_json
from .validation import run_all

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("wienerbayes")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults apply to omitted fields)")
    p.add_argument("--seed", type=int, help="master seed (0 .. 2**64-1)")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=["csv", "json", "both"], help="output format")
    p.add_argument("--threads", type=int, help="worker threads for replicates")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wienerbayes", description="Bayesian estimation and input design "
                                 "for Wiener models with Fourier output features.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {library_version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="MMSE estimate from a measurement file")
    _common(p)
    p.add_argument("--data", type=Path, required=True, help="text file with one measurement per line")
    p.add_argument("--sigma-w-sq", type=float, help="process noise variance (default: first configured value)")

    p = sub.add_parser("design", help="optimize the input for the configured model")
    _common(p)
    p.add_argument("--sigma-w-sq", type=float, help="process noise variance (default: first configured value)")

    p = sub.add_parser("benchmark", help="run one of the Monte Carlo benchmarks")
    _common(p)
    p.add_argument("id", type=int, choices=[1, 2, 3, 4])

    p = sub.add_parser("validate", help="check analytic invariants on random instances")
    _common(p)
    return ap


def _load(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    return cfg.replace_run(seed=args.seed, n_reps=args.reps, threads=args.threads,
                           output=str(args.out) if args.out else None, format=args.format)


def _sigma_w(cfg: ExperimentConfig, value: Optional[float]) -> float:
    return float(cfg["model"]["sigma_w_sq"][0] if value is None else value)


def cmd_estimate(args, cfg: ExperimentConfig) -> int:
    try:
        y = np.loadtxt(args.data, dtype=float, ndmin=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"--data: {exc}") from None
    T = y.size - 1
    model = cfg.model(_sigma_w(cfg, args.sigma_w_sq), T)
    u = cfg.input(T)
    gain = model.gain(u)
    theta = gain.estimate(y)
    out = Path(cfg["run"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    write_json({"estimate": theta.tolist(), "J": gain.J, "posterior_cov": gain.Sigma_pos.tolist(),
                "config_hash": cfg.hash, "seed": cfg["run"]["seed"], "version": library_version()},
               out / "estimate.json")
    print(" ".join(format_cell(v) for v in theta))
    return EXIT_OK


def cmd_design(args, cfg: ExperimentConfig) -> int:
    T = cfg["model"]["horizon"]
    model = cfg.model(_sigma_w(cfg, args.sigma_w_sq), T)
    u0 = cfg.input(T)
    res = optimize_inputs(model, u0, cfg.optimize_options())
    out = Path(cfg["run"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    fmt = cfg["run"]["format"]
    if fmt in ("csv", "both"):
        with open(out / "design.csv", "w") as fh:
            fh.write(f"# config_hash={cfg.hash} seed={cfg['run']['seed']}\n")
            fh.write("index,u0,u_star\n")
            for i, (a, b) in enumerate(zip(u0.stacked, res.u.stacked)):
                fh.write(f"{i},{format_cell(a)},{format_cell(b)}\n")
    if fmt in ("json", "both"):
        write_json({"J_initial": res.J_history[0], "J_final": res.J_history[-1], "iterations": res.iterations,
                    "reason": res.reason, "J_history": res.J_history, "u_star": res.u.stacked.tolist(),
                    "config_hash": cfg.hash, "seed": cfg["run"]["seed"], "version": library_version()},
                   out / "design.json")
    print(f"J: {res.J_history[0]:.6g} -> {res.J_history[-1]:.6g} ({res.iterations} iterations, {res.reason})")
    return EXIT_OK


def cmd_benchmark(args, cfg: ExperimentConfig) -> int:
    result: BenchmarkResult = run_benchmark(cfg, args.id)
    paths = emit_results(result, cfg["run"]["output"], cfg["run"]["format"], cfg)
    for p in paths:
        print(p)
    if result.failures:
        print(f"{len(result.failures)} replicate(s) failed; see failures.json", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    results = run_all(cfg["run"]["seed"])
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


COMMANDS = {"estimate": cmd_estimate, "design": cmd_design, "benchmark": cmd_benchmark, "validate": cmd_validate}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OptimizationError, NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
