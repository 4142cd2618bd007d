"""Experiment configuration, Monte Carlo orchestration and reports."""

from __future__ import annotations

import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from ipn.ensemble import (
    EnsembleConfig,
    assemble_m,
    build_a,
    law_to_json,
    sample_x,
    write_matrix_dump,
)
from ipn.equilibrium import ModelParams, SupportProfile, support
from ipn.errors import ConfigError
from ipn.measure import measure_from_config
from ipn.spectra import (
    completeness_defect,
    eig_h,
    exact_separation_check,
    no_eigenvalue_in,
    resolvent,
    resolvent_deviation,
    resolvent_prediction,
    spike_projection,
    support_exclusion_check,
    trace_identity,
)
from ipn.spikes import OutlierSet, SpikePrediction, classify, outlier_set_S

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CHECKS = ("outliers", "overlaps", "cross_overlaps", "aggregate", "separation", "exclusion", "resolvent")

DEFAULT_TOLERANCES = {
    "outliers": 0.1,
    "overlaps": 0.05,
    "aggregate": 0.05,  # per unit of multiplicity
    "cross_overlaps": 0.02,
    "exclusion": 0.15,
    "resolvent": 0.05,
    "resolvent_offdiag": 0.02,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["model", "ensemble"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["sigma", "c", "nu"],
            "additionalProperties": False,
            "properties": {
                "sigma": {"type": "number", "minimum": 0},
                "c": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "nu": {"type": "object"},
                "spikes": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "prefixItems": [{"type": "number"}, {"type": "integer", "minimum": 1}],
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            },
        },
        "ensemble": {
            "type": "object",
            "required": ["N"],
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "c": {"type": "number"},
                "entry_law": {"type": ["string", "object"]},
                "rotate": {"type": "boolean"},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trials": {"type": "integer", "minimum": 1},
                "checks": {"type": "array", "items": {"enum": list(CHECKS)}},
                "workers": {"type": "integer", "minimum": 1},
                "separation_gaps": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                "resolvent_z": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
        },
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    ensemble: EnsembleConfig
    trials: int = 1
    checks: tuple[str, ...] = ("outliers", "overlaps", "exclusion")
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    separation_gaps: tuple[tuple[float, float], ...] = ()
    resolvent_z: tuple[complex, ...] = ()
    output_path: str | None = None
    output_format: str = "json"
    workers: int = 1
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks {sorted(unknown)}")
        if any(v < 0 for v in self.tolerances.values()):
            raise ConfigError("tolerances must be nonnegative")
        if "resolvent" in self.checks:
            if self.ensemble.rotate:
                raise ConfigError("resolvent check requires rotate = false")
            if self.ensemble.entry_law not in ("complex-gaussian", "real-gaussian-pair"):
                raise ConfigError("resolvent check requires a Gaussian entry law")
            if not self.resolvent_z:
                raise ConfigError("resolvent check needs experiment.resolvent_z")
        if "separation" in self.checks and not self.separation_gaps:
            raise ConfigError("separation check needs experiment.separation_gaps")
        if self.output_format not in ("json", "csv"):
            raise ConfigError("output format must be json or csv")
        # fail before any sampling if A cannot be laid out at this size
        build_a(self.model, replace(self.ensemble, rotate=False))

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config schema violation at {where}: {exc.message}") from None
        m = data["model"]
        try:
            nu = measure_from_config(m["nu"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad model.nu: {exc}") from None
        spikes = tuple(sorted(((float(t), int(k)) for t, k in m.get("spikes", [])), reverse=True))
        model = ModelParams(float(m["sigma"]), float(m["c"]), nu, spikes)
        e = data["ensemble"]
        ens = EnsembleConfig(
            N=int(e["N"]),
            c=float(e.get("c", model.c)),
            entry_law=e.get("entry_law", "complex-gaussian"),
            rotate=bool(e.get("rotate", False)),
            seed=int(e.get("seed", 0)),
        )
        x = data.get("experiment", {})
        tol = dict(DEFAULT_TOLERANCES)
        tol.update({k: float(v) for k, v in data.get("tolerances", {}).items()})
        out = data.get("output", {})
        return cls(
            model=model,
            ensemble=ens,
            trials=int(x.get("trials", 1)),
            checks=tuple(x.get("checks", ("outliers", "overlaps", "exclusion"))),
            tolerances=tol,
            separation_gaps=tuple((float(a), float(b)) for a, b in x.get("separation_gaps", [])),
            resolvent_z=tuple(complex(re, im) for re, im in x.get("resolvent_z", [])),
            output_path=out.get("path"),
            output_format=out.get("format", "json"),
            workers=int(x.get("workers", 1)),
            raw=data,
        )

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def to_json(self) -> dict:
        return {
            "model": {
                "sigma": self.model.sigma,
                "c": self.model.c,
                "nu": self.model.nu.to_json(),
                "spikes": [list(s) for s in self.model.spikes],
            },
            "ensemble": {
                "N": self.ensemble.N,
                "n": self.ensemble.n,
                "c_N": self.ensemble.c_N,
                "entry_law": law_to_json(self.ensemble.entry_law),
                "rotate": self.ensemble.rotate,
                "seed": self.ensemble.seed,
            },
            "trials": self.trials,
            "checks": list(self.checks),
            "tolerances": dict(sorted(self.tolerances.items())),
            "separation_gaps": [list(g) for g in self.separation_gaps],
            "resolvent_z": [[z.real, z.imag] for z in self.resolvent_z],
        }


# --------------------------------------------------------------------------
# theory


@dataclass(frozen=True)
class TheoryBundle:
    params: ModelParams
    profile: SupportProfile
    predictions: tuple[SpikePrediction, ...]
    S: OutlierSet

    def to_json(self) -> dict:
        return {
            "support": self.profile.to_json(),
            "spikes": [p.to_json() for p in self.predictions],
            "S": self.S.to_json(),
        }


def predict(config: ExperimentConfig | ModelParams, n: int | None = None) -> TheoryBundle:
    """Support, spike predictions and the set ``S``; consumes no randomness."""
    if isinstance(config, ExperimentConfig):
        params, n = config.model, config.ensemble.n
    else:
        params = config
    profile = support(params)
    preds = tuple(classify(params, profile, n=n))
    return TheoryBundle(params, profile, preds, outlier_set_S(params, profile))


# --------------------------------------------------------------------------
# trials


class TrialError(RuntimeError):
    def __init__(self, trial: int, seed: int, cause: BaseException):
        super().__init__(f"trial {trial} (seed {seed}) failed: {cause!r}")
        self.trial = trial
        self.seed = seed


def _active_spikes(theory: TheoryBundle) -> list[int]:
    return [j for j, p in enumerate(theory.predictions) if p.in_outlier_set]


def run_trial(config: ExperimentConfig, theory: TheoryBundle, trial: int, dump: str | None = None) -> dict:
    """One draw of ``M``; returns plain numbers for the requested checks."""
    try:
        return _run_trial(config, theory, trial, dump)
    except Exception as exc:  # noqa: BLE001 - re-raised with replay context
        raise TrialError(trial, config.ensemble.seed, exc) from exc


def _run_trial(config, theory, trial, dump):
    params, ens = config.model, config.ensemble
    a = build_a(params, ens)
    x = sample_x(ens, trial=trial)
    m = assemble_m(a, x, params.sigma)
    if dump:
        write_matrix_dump(dump, m, ens.N)
    vals, vecs = eig_h(m)
    active = _active_spikes(theory)
    out: dict = {"trial": trial, "top": [float(v) for v in vals[: min(8, vals.size)]]}

    clusters = {}
    for j in active:
        lo, hi = a.rank_range(j)
        clusters[str(j)] = {
            "ranks": [lo, hi],
            "eigenvalues": [float(v) for v in vals[lo - 1 : hi]],
            "next_below": float(vals[hi]) if hi < vals.size else -math.inf,
            "projections": [float(v) for v in spike_projection(vecs, a, j)],
            "cross": {str(l): float(spike_projection(vecs, a, j, onto=l).sum()) for l in active if l != j},
        }
    out["clusters"] = clusters

    # exact finite-N identities, asserted on every draw
    worst = 0.0
    for j in active:
        for l in active:
            p, t, d = trace_identity(vals, vecs, a, j, l)
            worst = max(worst, abs(p - t), abs(p - d))
    out["trace_identity_defect"] = worst
    out["completeness_defect"] = completeness_defect(vecs, a)

    if "separation" in config.checks:
        out["separation"] = [
            exact_separation_check(vals, a, g, params, theory.profile).to_json() for g in config.separation_gaps
        ]
    if "exclusion" in config.checks:
        ok, bad = support_exclusion_check(vals, theory.S, config.tol("exclusion"))
        empties = [no_eigenvalue_in(vals, g) for g in config.separation_gaps]
        out["exclusion"] = {
            "contained": ok,
            "offenders": bad[:20],
            "gaps_empty": [e[0] for e in empties],
        }
    if "resolvent" in config.checks:
        out["resolvent"] = [resolvent(vals, vecs, z) for z in config.resolvent_z]
    return out


def _trial_task(args):
    return run_trial(*args)


def _worker_count(config: ExperimentConfig, workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("IPN_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"IPN_WORKERS={env!r} is not an integer") from None
    return config.workers


def _iter_trials(config, theory, workers, dump_path):
    tasks = [(config, theory, t, dump_path if (dump_path and t == 0) else None) for t in range(config.trials)]
    if workers <= 1 or config.trials == 1:
        for task in tasks:
            yield _trial_task(task)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map yields in submission order, so reductions are schedule independent
        yield from pool.map(_trial_task, tasks)


# --------------------------------------------------------------------------
# aggregation


def item_pass(item: dict) -> bool:
    """Verdict of a check item, recomputed from its stored numbers only."""
    rule, vals, target, tol = item["rule"], item["values"], item["target"], item["tolerance"]
    if not vals:
        return False
    if rule == "abs_mean":
        return abs(float(np.mean(vals)) - target) <= tol
    if rule == "mean_below":
        return float(np.mean(vals)) <= tol
    if rule == "max_below":
        return max(vals) < target
    if rule == "all_true":
        return all(v == 1.0 for v in vals)
    raise ValueError(rule)


def _item(label, rule, values, target=None, tolerance=None, **extra) -> dict:
    v = [float(x) for x in values]
    arr = np.asarray(v)
    item = {
        "label": label,
        "rule": rule,
        "target": None if target is None else float(target),
        "tolerance": None if tolerance is None else float(tolerance),
        "values": v,
        "mean": float(arr.mean()) if v else 0.0,
        "std": float(arr.std()) if v else 0.0,
        "min": float(arr.min()) if v else 0.0,
        "max": float(arr.max()) if v else 0.0,
        **extra,
    }
    item["pass"] = item_pass(item)
    return item


def _next_feature_below(theory: TheoryBundle, rho: float) -> float:
    cands = [p for p in theory.S.points if p < rho]
    cands += [b for a, b in theory.S.intervals if b < rho]
    return max(cands) if cands else -math.inf


def aggregate(config: ExperimentConfig, theory: TheoryBundle, trials: list[dict], resolvent_means=None) -> dict:
    checks: dict = {}
    active = _active_spikes(theory)
    preds = theory.predictions

    if "outliers" in config.checks:
        tol = config.tol("outliers")
        items = []
        for j in active:
            p = preds[j]
            for q in range(p.multiplicity):
                vals = [t["clusters"][str(j)]["eigenvalues"][q] for t in trials]
                items.append(_item(f"theta={p.theta:g} rank {p.rank_range[0] + q}", "abs_mean", vals, p.rho, tol))
            bound = _next_feature_below(theory, p.rho) + config.tol("exclusion")
            vals = [t["clusters"][str(j)]["next_below"] for t in trials]
            items.append(_item(f"theta={p.theta:g} next eigenvalue below cluster", "max_below", vals, bound))
        checks["outliers"] = {"tolerance": tol, "items": items}

    if "overlaps" in config.checks:
        tol = config.tol("overlaps")
        items = []
        for j in active:
            p = preds[j]
            vals = [float(np.mean(t["clusters"][str(j)]["projections"])) for t in trials]
            items.append(_item(f"theta={p.theta:g} per-vector overlap", "abs_mean", vals, p.tau, tol))
        checks["overlaps"] = {"tolerance": tol, "items": items}

    if "aggregate" in config.checks:
        tol = config.tol("aggregate")
        items = []
        for j in active:
            p = preds[j]
            vals = [float(np.sum(t["clusters"][str(j)]["projections"])) for t in trials]
            items.append(
                _item(f"theta={p.theta:g} summed overlap", "abs_mean", vals, p.aggregate_tau, tol * p.multiplicity)
            )
        checks["aggregate"] = {"tolerance": tol, "items": items}

    if "cross_overlaps" in config.checks:
        tol = config.tol("cross_overlaps")
        items = []
        for j in active:
            for l in active:
                if l == j:
                    continue
                vals = [t["clusters"][str(j)]["cross"][str(l)] for t in trials]
                label = f"cluster theta={preds[j].theta:g} onto theta={preds[l].theta:g}"
                items.append(_item(label, "mean_below", vals, 0.0, tol))
        checks["cross_overlaps"] = {"tolerance": tol, "items": items}

    if "separation" in config.checks:
        items = []
        for g_idx, (x, y) in enumerate(config.separation_gaps):
            reps = [t["separation"][g_idx] for t in trials]
            vals = [1.0 if (r["assumption_ok"] and r["below"] and r["above"]) else 0.0 for r in reps]
            items.append(
                _item(
                    f"gap [{x:g}, {y:g}]", "all_true", vals,
                    i_N=reps[0]["i_N"], omega=[reps[0]["omega_x"], reps[0]["omega_y"]],
                    assumption_ok=all(r["assumption_ok"] for r in reps),
                )
            )
        checks["separation"] = {"tolerance": None, "items": items}

    if "exclusion" in config.checks:
        eps = config.tol("exclusion")
        vals = [1.0 if t["exclusion"]["contained"] else 0.0 for t in trials]
        offenders = sorted({v for t in trials for v in t["exclusion"]["offenders"]})[:20]
        items = [_item(f"spectrum within {eps:g} of S", "all_true", vals, offenders=offenders)]
        for g_idx, (x, y) in enumerate(config.separation_gaps):
            vals = [1.0 if t["exclusion"]["gaps_empty"][g_idx] else 0.0 for t in trials]
            items.append(_item(f"no eigenvalue in [{x:g}, {y:g}]", "all_true", vals))
        checks["exclusion"] = {"tolerance": eps, "items": items}

    if "resolvent" in config.checks:
        tol, tol_off = config.tol("resolvent"), config.tol("resolvent_offdiag")
        items = []
        for z, (diag, off_mean, off_max) in zip(config.resolvent_z, resolvent_means):
            items.append(_item(f"z={z.real:g}{z.imag:+g}i diagonal", "mean_below", [diag], 0.0, tol))
            items.append(
                _item(f"z={z.real:g}{z.imag:+g}i off-diagonal", "mean_below", [off_mean], 0.0, tol_off, max_abs=off_max)
            )
        checks["resolvent"] = {"tolerance": tol, "items": items}

    for entry in checks.values():
        entry["pass"] = all(i["pass"] for i in entry["items"])
    return checks


def _versions() -> dict:
    from ipn import __version__

    return {"ipn": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def simulate(
    config: ExperimentConfig,
    workers: int | None = None,
    dump_path: str | None = None,
    theory: TheoryBundle | None = None,
) -> dict:
    """Run all trials and return the (schema-valid) report as a dict."""
    t0 = time.perf_counter()
    theory = theory or predict(config)
    t1 = time.perf_counter()
    n_workers = _worker_count(config, workers)

    trials = []
    res_sums = None
    for out in _iter_trials(config, theory, n_workers, dump_path):
        if "resolvent" in out:
            mats = out.pop("resolvent")
            res_sums = mats if res_sums is None else [s + m for s, m in zip(res_sums, mats)]
        trials.append(out)
    t2 = time.perf_counter()

    res_means = None
    if res_sums is not None:
        a = build_a(config.model, config.ensemble)
        res_means = [
            resolvent_deviation(s / len(trials), resolvent_prediction(config.model, a.gamma, z))
            for s, z in zip(res_sums, config.resolvent_z)
        ]
    checks = aggregate(config, theory, trials, res_means)

    identities = {
        "trace_identity_max_defect": max(t["trace_identity_defect"] for t in trials),
        "completeness_max_defect": max(t["completeness_defect"] for t in trials),
    }
    report = {
        "schema_version": 1,
        "config": config.to_json(),
        "theory": theory.to_json(),
        "checks": checks,
        "identities": identities,
        "pass": all(c["pass"] for c in checks.values()),
        "trials": [
            {k: v for k, v in t.items() if k in ("trial", "top", "separation", "exclusion")} for t in trials
        ],
        "metadata": {
            "seed": config.ensemble.seed,
            "trials": config.trials,
            "trial_streams": [[config.ensemble.seed, 0, t["trial"]] for t in trials],
            "workers": n_workers,
            "versions": _versions(),
            "timing": {"theory_s": t1 - t0, "trials_s": t2 - t1, "total_s": time.perf_counter() - t0},
        },
    }
    validate_report(report)
    return report


def report_schema() -> dict:
    return json.loads(resources.files("ipn").joinpath("report_schema.json").read_text())


def validate_report(report: dict) -> None:
    jsonschema.validate(report, report_schema())


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False)


def report_csv(report: dict) -> str:
    """Flattened per-trial rows: ``check,label,trial,value``."""
    lines = ["check,label,trial,value"]
    for name, entry in report["checks"].items():
        for item in entry["items"]:
            for t, v in enumerate(item["values"]):
                label = item["label"].replace(",", ";")
                lines.append(f"{name},{label},{t},{v!r}")
    return "\n".join(lines) + "\n"


def write_report(report: dict, path: str | Path, fmt: str = "json") -> None:
    validate_report(report)
    text = dumps_report(report) + "\n" if fmt == "json" else report_csv(report)
    Path(path).write_text(text)


def verify(config: ExperimentConfig, output: str | Path | None = None, workers: int | None = None, dump: bool = False):
    """Predict, simulate and gate; returns ``(exit_code, report)``.  The report is always written."""
    out = Path(output or config.output_path or "report.json")
    dump_path = str(out.with_suffix(".trial0.ipnm")) if dump else None
    report = simulate(config, workers=workers, dump_path=dump_path)
    write_report(report, out, config.output_format)
    return (0 if report["pass"] else 1), report
