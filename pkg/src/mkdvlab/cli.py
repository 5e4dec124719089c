"""Command-line experiment runner.

    mkdvlab run.cfg [--experiment NAME] [--output-dir DIR] [--seed N] [--quiet]

The config is a flat ``key = value`` file with dotted keys, e.g.::

    experiment = stability
    alpha = 0.5
    grid.n = 1024
    evolution.t_final = 20
    tolerances.tube_factor = 10

Exit status: 0 all checks pass, 1 some check failed, 2 invalid config,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import ast
import json
import logging
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import profiles as pr
from .experiments import DEFAULT_TOLERANCES, EXPERIMENTS, PERTURBATIONS, RUNNERS, ExperimentConfig
from .pde import SCHEMES

__all__ = ["ConfigError", "parse_config", "load_config", "validate", "run", "main", "OUTPUT_ENV"]

log = logging.getLogger("mkdvlab")

OUTPUT_ENV = "MKDVLAB_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# dotted config key -> ExperimentConfig attribute
_KEYS = {
    "experiment": "experiment",
    "alpha": "alpha",
    "beta": "beta",
    "shifts.x1": "x1",
    "shifts.x2": "x2",
    "eta": "eta",
    "perturbation": "perturbation",
    "perturbation.file": "perturbation_file",
    "grid.L": "L",
    "grid.n": "n",
    "evolution.dt": "dt",
    "evolution.t_final": "t_final",
    "evolution.scheme": "scheme",
    "evolution.blowup_threshold": "blowup_threshold",
    "evolution.snapshot_stride": "snapshot_stride",
    "evolution.sponge_width": "sponge_width",
    "identities.draws": "n_draws",
    "seed": "seed",
    "output_dir": "output_dir",
}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


class ConfigError(ValueError):
    pass


def _coerce(attr: str, raw: str):
    kind = _TYPES[attr]
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            v = ast.literal_eval(raw)
            if isinstance(v, float) and v.is_integer():
                v = int(v)
            if not isinstance(v, int):
                raise ValueError
            return v
    except (ValueError, SyntaxError):
        raise ConfigError(f"{attr}: cannot parse {raw!r} as {kind}") from None
    return raw.strip().strip("\"'")


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat dotted-key format; unknown keys are errors."""
    cfg = ExperimentConfig()
    tols = dict(DEFAULT_TOLERANCES)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key.startswith("tolerances."):
            name = key.split(".", 1)[1]
            try:
                tols[name] = float(raw)
            except ValueError:
                raise ConfigError(f"line {lineno}: tolerance {name} is not a number") from None
        elif key in _KEYS:
            setattr(cfg, _KEYS[key], _coerce(_KEYS[key], raw))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    cfg.tolerances = tols
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return parse_config(text)


def validate(cfg: ExperimentConfig) -> list[str]:
    """Static findings; an empty list means the config is runnable."""
    out = []
    if cfg.experiment not in EXPERIMENTS:
        out.append(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.perturbation not in PERTURBATIONS:
        out.append(f"perturbation must be one of {PERTURBATIONS}, got {cfg.perturbation!r}")
    elif cfg.perturbation == "custom-file" and not Path(cfg.perturbation_file).is_file():
        out.append(f"perturbation file {cfg.perturbation_file!r} not found")
    if not (cfg.alpha > 0 and cfg.beta > 0):
        out.append(f"alpha and beta must be positive, got {cfg.alpha}, {cfg.beta}")
    if not cfg.eta >= 0:
        out.append("eta must be non-negative")
    if cfg.scheme not in SCHEMES:
        out.append(f"evolution.scheme must be one of {SCHEMES}")
    if not (cfg.dt > 0 and cfg.t_final > 0 and cfg.blowup_threshold > 1 and cfg.snapshot_stride >= 1):
        out.append("evolution settings must be positive (blowup_threshold > 1)")
    if cfg.n_draws < 1:
        out.append("identities.draws must be >= 1")
    for k, v in cfg.tolerances.items():
        if not v > 0:
            out.append(f"tolerance {k} must be positive, got {v}")
    missing = set(DEFAULT_TOLERANCES) - set(cfg.tolerances)
    if missing:
        out.append(f"missing tolerances: {sorted(missing)}")
    try:
        g = cfg.grid
    except ValueError as err:
        out.append(f"grid: {err}")
        return out
    if out:
        return out
    if cfg.L * cfg.beta < 20:
        out.append(
            f"domain too small: L*beta = {cfg.L * cfg.beta:.3g} < 20, "
            f"tails of size e^(-beta L) = {np.exp(-cfg.beta * cfg.L):.1e} reach the window edge"
        )
    rep = pr.blowup_report(pr.SolitonParams(cfg.alpha, cfg.beta, cfg.x1, cfg.x2), g)
    if rep.is_singular:
        out.append(
            f"shifts on the singular lattice: x1 - x2 = {cfg.x1 - cfg.x2:.6g} is {rep.distance:.2e} from "
            f"(pi/alpha)(k + 1/2), k = {rep.nearest_k}; the complex soliton has a real pole"
        )
    # RK4 stability on the imaginary axis: dt * 3 max|u|^2 * k_dealiased < 2.8
    umax = max(np.max(np.abs(pr.breather(cfg.base(), g).values)), 1.0)
    kmax = (2.0 / 3.0) * np.pi / g.spacing
    if cfg.dt * 3 * umax**2 * kmax > 2.8:
        out.append(f"dt = {cfg.dt:g} likely unstable: needs dt < {2.8 / (3 * umax**2 * kmax):.2e}")
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return obj.name
    return obj


def run(cfg: ExperimentConfig) -> dict:
    """Execute ``cfg.experiment`` and write ``report.json``; returns the report."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    checks, files, extras = RUNNERS[cfg.experiment](cfg)
    elapsed = time.perf_counter() - t0
    report = {
        "config": cfg.echo(),
        "checks": [asdict(c) for c in checks],
        "passed": all(c.passed for c in checks),
        "files": sorted(files),
        "timings": {"wall_seconds": elapsed},
        "extras": extras,
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mkdvlab", description="Run an mKdV breather experiment from a config file.")
    p.add_argument("config", help="flat key = value config file")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="override the experiment in the config")
    p.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or the config value)")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--quiet", action="store_true", help="only report failures")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.experiment:
        cfg.experiment = args.experiment
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output_dir:
        cfg.output_dir = args.output_dir
    elif os.environ.get(OUTPUT_ENV):
        cfg.output_dir = os.environ[OUTPUT_ENV]
    findings = validate(cfg)
    if findings:
        for f in findings:
            print(f"config error: {f}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run(cfg)
    except Exception as err:  # numerical failure: report the module's message verbatim
        print(f"numerical failure ({type(err).__name__}): {err}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in report["checks"]:
        if not args.quiet or not c["passed"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (threshold {c['threshold']:.3e})")
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
