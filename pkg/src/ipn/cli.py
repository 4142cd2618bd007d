"""Command line entry point ``ipn``.

Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ipn.ensemble import EnsembleConfig
from ipn.equilibrium import density_grid
from ipn.errors import ConfigError, DomainError, SolverError
from ipn.harness import ExperimentConfig, TrialError, dumps_report, predict, simulate, verify, write_report

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise ConfigError(f"--grid expects start:stop:count, got {text!r}") from None


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_predict(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    _emit(json.dumps(predict(cfg).to_json(), indent=2, allow_nan=False) + "\n", args.output)
    return EXIT_PASS


def cmd_support(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    _emit(json.dumps(predict(cfg).profile.to_json(), indent=2) + "\n", args.output)
    return EXIT_PASS


def cmd_density(args) -> int:
    cfg = ExperimentConfig.from_toml(args.config)
    x = _parse_grid(args.grid)
    dens = density_grid(cfg.model, x, args.eta)
    rows = ["x,density"] + [f"{float(xi)!r},{'' if np.isnan(d) else repr(float(d))}" for xi, d in zip(x, dens)]
    _emit("\n".join(rows) + "\n", args.output)
    return EXIT_PASS


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    ens = cfg.ensemble
    if getattr(args, "seed", None) is not None:
        ens = replace(ens, seed=args.seed)
    trials = args.trials if getattr(args, "trials", None) is not None else cfg.trials
    return replace(cfg, ensemble=ens, trials=trials)


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.from_toml(args.config), args)
    report = simulate(cfg, workers=args.workers)
    out = args.output or cfg.output_path
    if out:
        write_report(report, out, cfg.output_format)
    else:
        sys.stdout.write(dumps_report(report) + "\n")
    return EXIT_PASS


def cmd_verify(args) -> int:
    cfg = _apply_overrides(ExperimentConfig.from_toml(args.config), args)
    code, report = verify(cfg, output=args.output, workers=args.workers, dump=args.dump)
    for name, entry in report["checks"].items():
        for item in entry["items"]:
            status = "PASS" if item["pass"] else "FAIL"
            target = "" if item["target"] is None else f" target={item['target']:.6g}"
            print(f"{status} {name}: {item['label']} mean={item['mean']:.6g}{target}")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output=True):
        p.add_argument("-c", "--config", required=True, help="TOML experiment config")
        if output:
            p.add_argument("-o", "--output")

    p = sub.add_parser("predict", help="support, outlier positions and overlaps")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("support", help="admissible set and support of the limiting law")
    common(p)
    p.set_defaults(func=cmd_support)

    p = sub.add_parser("density", help="limiting density on a grid (CSV: x,density)")
    common(p)
    p.add_argument("--eta", type=float, default=1e-6)
    p.add_argument("--grid", default="0:5:2000", help="start:stop:count")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("simulate", help="Monte Carlo report")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="simulate and gate on tolerances")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--dump", action="store_true", help="write trial 0's matrix next to the report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"ipn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ipn: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrialError as exc:
        print(f"ipn: {exc}", file=sys.stderr)
        cause = exc.__cause__
        return EXIT_USAGE if isinstance(cause, ConfigError) else EXIT_NUMERIC
    except (SolverError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"ipn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
