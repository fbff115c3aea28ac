"""``randpost`` command line: run experiments and write CSV/JSON results.

Settings are read from an optional INI file (one section per subcommand,
keys named like the config fields) and then overridden by flags. Exit
codes: 0 success, 1 failed self-test, 2 configuration error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, RandPostError
from .experiments import (
    DEFAULT_H_VALUES,
    DEFAULT_M_VALUES,
    DEFAULT_SIGMA_VALUES,
    MODE_STEPS,
    AveragedExperimentConfig,
    MarginalExperimentConfig,
    TheoremCheckConfig,
    median_errors,
    rate_summary,
    run_averaged_experiment,
    run_marginal_experiment,
    run_theorem_check,
)
from .oracles import CHECKS

logger = logging.getLogger("randpost")

SWEEP_HEADER = [
    "method", "sweep_variable", "sweep_value", "replicate", "acceptance_ratio",
    "mean_error", "cov_error", "forward_evals", "wall_time_s",
]
DEFAULT_SWEEP_VALUES = {"M": DEFAULT_M_VALUES, "sigma": DEFAULT_SIGMA_VALUES, "h": DEFAULT_H_VALUES}


def fmt(x) -> str:
    """17 significant digits for floats (round-trip exact); blank for NaN or None."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _json_float(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


# -- configuration ----------------------------------------------------------


def _parse_value(text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, tuple):
            items = [t for t in text.replace(";", ",").split(",") if t.strip()]
            vals = tuple(float(t) for t in items)
            if default and all(isinstance(v, int) for v in default) and all(v.is_integer() for v in vals):
                return tuple(int(v) for v in vals)
            return vals
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r}") from None
    return text


def _section_overrides(parser: configparser.ConfigParser, section: str, cls) -> dict:
    if not parser.has_section(section):
        return {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    out = {}
    for key, text in parser.items(section):
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        try:
            out[key] = _parse_value(text, getattr(defaults, key))
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return out


def load_config(path: Optional[str]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys such as N and M are case-sensitive
    if path is None:
        return parser
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    return parser


def _run_section(parser) -> dict:
    return dict(parser.items("run")) if parser.has_section("run") else {}


def _resolve_common(args, parser) -> dict:
    run = _run_section(parser)
    mode = args.mode or run.get("mode", "ci")
    if mode not in MODE_STEPS:
        raise ConfigError(f"mode must be 'ci' or 'paper', got {mode!r}")
    try:
        seed = args.seed if args.seed is not None else int(run.get("seed", 0))
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get("RANDPOST_THREADS", run.get("threads", 1)))
    except ValueError as exc:
        raise ConfigError(f"bad seed or thread count: {exc}") from None
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    out = Path(args.out or run.get("out", "randpost_out"))
    return {"mode": mode, "seed": seed, "threads": threads, "out": out}


def _values(text: Optional[str], kind=float):
    if text is None:
        return None
    try:
        vals = tuple(kind(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"cannot parse value list {text!r}") from None
    if not vals:
        raise ConfigError("empty value list")
    return vals


def _prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _manifest(args, common, command: str, config) -> dict:
    return {
        "command": command,
        "config_path": args.config,
        "output_dir": str(common["out"]),
        "mode": common["mode"],
        "global_seed": common["seed"],
        "artifact_version": __version__,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()},
    }


# -- subcommands ------------------------------------------------------------


def _sweep_rows(rows, timing: bool):
    for r in rows:
        yield [r.method, r.sweep_variable, r.sweep_value, r.replicate, r.acceptance_ratio,
               r.mean_error, r.cov_error, r.forward_evals, r.wall_time_seconds if timing else None]


def _rates_payload(rows, sweep_variable: str) -> dict:
    slopes = rate_summary(rows)
    medians = {}
    for method in dict.fromkeys(r.method for r in rows):
        values, acc, me, ce = median_errors(rows, method)
        medians[method] = {
            "sweep_values": values,
            "acceptance_ratio": [_json_float(a) for a in acc],
            "mean_error": me,
            "cov_error": ce,
        }
    return {"sweep_variable": sweep_variable, **slopes, "medians": medians}


def cmd_marginal(args) -> int:
    parser = load_config(args.config)
    common = _resolve_common(args, parser)
    fields = _section_overrides(parser, "marginal", MarginalExperimentConfig)
    file_sweep = fields.get("sweep_variable", "M")
    sweep = args.sweep or file_sweep
    if sweep not in DEFAULT_SWEEP_VALUES:
        raise ConfigError(f"--sweep must be one of M, sigma, h; got {sweep!r}")
    fields["sweep_variable"] = sweep
    if "sweep_values" not in fields or sweep != file_sweep:
        fields["sweep_values"] = DEFAULT_SWEEP_VALUES[sweep]
    if args.values:
        fields["sweep_values"] = _values(args.values, int if sweep == "M" else float)
    fields.setdefault("N", MODE_STEPS[common["mode"]])
    if args.steps is not None:
        fields["N"] = args.steps
    if args.replicates is not None:
        fields["replicates"] = args.replicates
    fields["seed"] = common["seed"]
    config = MarginalExperimentConfig(**fields)
    out = _prepare_out(common["out"])
    rows = run_marginal_experiment(config, workers=common["threads"])
    write_csv(out / f"marginal_{sweep}.csv", SWEEP_HEADER, _sweep_rows(rows, args.timing))
    rates = _rates_payload(rows, sweep)
    write_json(out / "rates.json", rates)
    write_json(out / "manifest.json", _manifest(args, common, "marginal", config))
    print(f"wrote {len(rows)} rows to {out / f'marginal_{sweep}.csv'}")
    for key in sorted(k for k in rates if k.endswith("_slope")):
        print(f"{key} = {rates[key]}")
    return 0


def cmd_averaged(args) -> int:
    parser = load_config(args.config)
    common = _resolve_common(args, parser)
    fields = _section_overrides(parser, "averaged", AveragedExperimentConfig)
    if args.h_values:
        fields["h_values"] = _values(args.h_values)
    fields.setdefault("N", MODE_STEPS[common["mode"]])
    if args.steps is not None:
        fields["N"] = args.steps
    if args.replicates is not None:
        fields["replicates"] = args.replicates
    if args.mwmc:
        fields["run_mwmc"] = True
    fields["seed"] = common["seed"]
    config = AveragedExperimentConfig(**fields)
    if len(config.h_values) < 3:
        warnings.warn(f"{len(config.h_values)} h value(s): no rate fit", UserWarning, stacklevel=1)
    out = _prepare_out(common["out"])
    res = run_averaged_experiment(config, workers=common["threads"])
    write_csv(out / "averaged_h.csv", SWEEP_HEADER, _sweep_rows(res.rows, args.timing))
    for c in res.contours:
        rows = ([x[0], x[1], dm, dc] for x, dm, dc in zip(c.points, c.density_mixture, c.density_closed_form))
        write_csv(out / f"contour_grid_{c.h:g}.csv", ["x1", "x2", "density_mixture", "density_closed_form"], rows)
    rates = _rates_payload(res.rows, "h") if len(config.h_values) >= 3 else {"sweep_variable": "h"}
    rates["hellinger_mixture_vs_averaged"] = [
        {"replicate": r, "h_large": max(config.contour_h_values), "h_small": min(config.contour_h_values),
         "hellinger_h_large": a, "hellinger_h_small": b}
        for r, a, b in res.hellinger_comparison
    ]
    write_json(out / "rates.json", rates)
    write_json(out / "manifest.json", _manifest(args, common, "averaged", config))
    print(f"wrote {len(res.rows)} rows to {out / 'averaged_h.csv'} and {len(res.contours)} contour grids")
    for key in sorted(k for k in rates if k.endswith("_slope")):
        print(f"{key} = {rates[key]}")
    return 0


def _parse_fix(text: str):
    key, sep, val = text.partition("=")
    key = key.strip()
    if not sep or key not in ("M", "h"):
        raise ConfigError(f"--fix expects M=<int> or h=<float>, got {text!r}")
    try:
        return key, (int(val) if key == "M" else float(val))
    except ValueError:
        raise ConfigError(f"cannot parse --fix value {val!r}") from None


def cmd_theorem_check(args) -> int:
    parser = load_config(args.config)
    common = _resolve_common(args, parser)
    fields = _section_overrides(parser, "theorem-check", TheoremCheckConfig)
    sweep = None
    if args.fix:
        key, val = _parse_fix(args.fix)
        if key == "M":
            fields["fixed_M"], sweep = val, "h"
        else:
            fields["fixed_h"], sweep = val, "M"
    if args.h_values:
        fields["h_values"] = _values(args.h_values)
    if args.M_values:
        fields["M_values"] = _values(args.M_values, int)
    if args.replicates is not None:
        fields["replicates"] = args.replicates
    fields["seed"] = common["seed"]
    config = TheoremCheckConfig(**fields)
    out = _prepare_out(common["out"])
    res = run_theorem_check(config, sweep)
    write_csv(
        out / "hellinger_rates.csv", ["kind", "h", "M", "rms_hellinger", "replicates"],
        ([r.kind, r.h, r.M, r.rms_hellinger, r.replicates] for r in res.rows),
    )
    slopes = {}
    for name in ("slope_vs_h", "slope_vs_M", "marginal_slope_vs_h", "marginal_slope_vs_M"):
        fit = getattr(res, name)
        if fit is not None:
            slopes[name] = fit.slope
    if sweep in (None, "h") and "slope_vs_h" not in slopes:
        warnings.warn("fewer than 3 positive h values: no slope_vs_h", UserWarning, stacklevel=1)
    if sweep in (None, "M") and "slope_vs_M" not in slopes:
        warnings.warn("fewer than 3 M values: no slope_vs_M", UserWarning, stacklevel=1)
    write_json(out / "rates.json", {"fixed_M": config.fixed_M, "fixed_h": config.fixed_h, **slopes})
    write_json(out / "manifest.json", _manifest(args, common, "theorem-check", config))
    for key, val in slopes.items():
        print(f"{key} = {val}")
    return 0


def cmd_selftest(args) -> int:
    if args.list:
        for name in CHECKS:
            print(name)
        return 0
    ok = True
    for name, check in CHECKS.items():
        res = check(args.tolerance_scale)
        print(res.line())
        ok &= res.passed
    return 0 if ok else 1


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randpost", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"randpost {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI file with [run] and per-command sections")
        p.add_argument("--out", help="output directory (default randpost_out)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit run seed")
        p.add_argument("--mode", choices=sorted(MODE_STEPS), help="chain length preset (ci: 1e5, paper: 1e6)")
        p.add_argument("--threads", type=int, help="worker processes (default $RANDPOST_THREADS or 1)")
        p.add_argument("--replicates", type=int, help="replicates per configuration")

    p = sub.add_parser("marginal", help="PMMH and MCwM against the marginal posterior")
    common(p)
    p.add_argument("--sweep", choices=("M", "sigma", "h"))
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--steps", type=int, help="chain length, overrides --mode")
    p.add_argument("--timing", action="store_true", help="record wall times (makes output non-reproducible)")
    p.set_defaults(func=cmd_marginal)

    p = sub.add_parser("averaged", help="Monte Carlo mixtures against the averaged posterior")
    common(p)
    p.add_argument("--h-values", help="comma-separated h values")
    p.add_argument("--mwmc", action="store_true", help="also sample each mixture with MwMC")
    p.add_argument("--steps", type=int, help="MwMC chain length, overrides --mode")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_averaged)

    p = sub.add_parser("theorem-check", help="Hellinger error rates in h and M (one dimension)")
    common(p)
    p.add_argument("--fix", help="M=<int> sweeps h; h=<float> sweeps M; default both")
    p.add_argument("--h-values")
    p.add_argument("--M-values")
    p.set_defaults(func=cmd_theorem_check)

    p = sub.add_parser("selftest", help="closed forms against quadrature and Monte Carlo")
    p.add_argument("--list", action="store_true", help="print check names and exit")
    p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"randpost: configuration error: {exc}", file=sys.stderr)
        return 2
    except (RandPostError, np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(f"randpost: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
