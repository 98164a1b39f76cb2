"""Run orchestration: execute a command, collect file bodies and a summary.

Every command produces a ``run.json`` summary plus zero or more CSV files.
CSV bodies are rendered once, with a fixed float format and fixed column
order, so two runs with the same config yield byte-identical files.  The
file *contents* are returned as strings; writing them to disk is the
caller's job (the CLI, or any HTTP client of the service).

Exit code convention: 0 success, 1 validation failure, 2 numerical
failure.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

from . import __version__
from .config import SimConfig, build_problem, config_hash
from .diagnostics import (
    apriori_bounds,
    perturbation_closeness,
    truncation_study,
)
from .errors import CoagFragError, ConfigurationError, NumericalError
from .integrator import Trajectory, integrate
from .kernels import validate_hypotheses
from .operators import build_tables
from .oracle import DEFAULT_SEED, run_certification

WORKERS_ENV = "COAGFRAG_WORKERS"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


@dataclass
class RunArtifacts:
    status: str  # "ok" | "validation_failure" | "numerical_failure"
    exit_code: int
    files: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def worker_count() -> int:
    """Worker count from the environment; affects speed only, never results."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _header_lines(cfg: SimConfig, grid_summary: dict) -> list[str]:
    return [
        f"# coagfrag {__version__}",
        "# config_hash=" + config_hash(cfg),
        "# grid: z_min={z_min:.17g} z_max={z_max:.17g} cells={cells} ratio={ratio:.17g}".format(
            **grid_summary
        ),
    ]


def _csv(header: list[str], columns: list[str], rows) -> str:
    lines = list(header)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _base_summary(command: str, cfg: SimConfig | None) -> dict:
    return {
        "schema_version": 1,
        "command": command,
        "package_version": __version__,
        "config_hash": config_hash(cfg) if cfg is not None else None,
        "grid": None,
        "apriori": {"V1": None, "V": None, "overflowed": None},
        "final_mass_residual": None,
        "wall_time_s": None,
        "status": "ok",
        "exit_code": EXIT_OK,
        "error": None,
        "outputs": [],
    }


def _jsonsafe(obj):
    """Replace non-finite floats with null so run.json stays strict JSON.

    Overflowed bound constants are reported through their boolean flag; the
    numeric slots go to null rather than the non-standard Infinity literal.
    """
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonsafe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonsafe(v) for v in obj]
    return obj


def _finish(artifacts: RunArtifacts, started: float) -> RunArtifacts:
    artifacts.summary["wall_time_s"] = time.monotonic() - started
    artifacts.summary["status"] = artifacts.status
    artifacts.summary["exit_code"] = artifacts.exit_code
    artifacts.summary["outputs"] = sorted(k for k in artifacts.files if k != "run.json")
    artifacts.summary = _jsonsafe(artifacts.summary)
    artifacts.files["run.json"] = (
        json.dumps(artifacts.summary, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )
    return artifacts


def _failure(command: str, cfg: SimConfig | None, exc: Exception, started: float) -> RunArtifacts:
    if isinstance(exc, ConfigurationError):
        status, code = "validation_failure", EXIT_VALIDATION
    elif isinstance(exc, (NumericalError, CoagFragError)):
        status, code = "numerical_failure", EXIT_NUMERICAL
    else:
        raise exc
    summary = _base_summary(command, cfg)
    summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
    art = RunArtifacts(status=status, exit_code=code, summary=summary)
    return _finish(art, started)


def refusal_artifacts(
    command: str, problems: list[str], cfg: SimConfig | None = None
) -> RunArtifacts:
    """Artifacts for a config refused by the range-validation gate."""
    started = time.monotonic()
    summary = _base_summary(command, cfg)
    summary["error"] = {
        "type": "ConfigurationError",
        "message": "config refused (pass allow_unvalidated to override): " + "; ".join(problems),
    }
    art = RunArtifacts(status="validation_failure", exit_code=EXIT_VALIDATION, summary=summary)
    return _finish(art, started)


def _moments_csv(cfg: SimConfig, traj: Trajectory) -> str:
    extra = [o for o in traj.moment_orders if o not in (0.0, 1.0, 2.0)]
    columns = ["t", "M0", "M1", "M2"] + [f"M{_fmt(o)}" for o in extra] + ["mass_residual"]
    rows = []
    for k in range(traj.times.size):
        row = [traj.times[k], *traj.moments[k], traj.mass_residuals[k]]
        rows.append(row)
    return _csv(_header_lines(cfg, traj.grid.summary()), columns, rows)


def _snapshots_csv(cfg: SimConfig, traj: Trajectory) -> str:
    pairs = sorted(traj.snapshots.items())
    columns = ["z", "g_initial"] + [f"g_t{_fmt(t)}" for t, _ in pairs]
    rows = []
    for i in range(traj.grid.cells):
        row = [traj.grid.pivots[i], traj.densities[0][i]] + [v[i] for _, v in pairs]
        rows.append(row)
    return _csv(_header_lines(cfg, traj.grid.summary()), columns, rows)


def _steps_csv(cfg: SimConfig, traj: Trajectory) -> str:
    columns = ["t", "dt", "accepted", "M0", "M1", "M2", "mass_residual"]
    rows = [
        [r.t, r.dt, 1.0 if r.accepted else 0.0, r.m0, r.m1, r.m2, r.mass_residual]
        for r in traj.step_log
    ]
    return _csv(_header_lines(cfg, traj.grid.summary()), columns, rows)


def run_simulate(cfg: SimConfig) -> RunArtifacts:
    """Integrate the configured problem and emit the trajectory files."""
    started = time.monotonic()
    try:
        grid, kset, g0, ctl = build_problem(cfg)
        tables = build_tables(grid, kset)
        bounds = apriori_bounds(g0, kset, ctl.t_end)
        traj = integrate(kset, g0, ctl, moment_orders=tuple(cfg.outputs.moment_orders), tables=tables)
    except Exception as exc:
        return _failure("simulate", cfg, exc, started)
    summary = _base_summary("simulate", cfg)
    summary["grid"] = grid.summary()
    summary["apriori"] = {"V1": bounds.V1, "V": bounds.V, "overflowed": bounds.overflowed}
    summary["final_mass_residual"] = float(traj.mass_residuals[-1])
    summary["steps_accepted"] = int(sum(1 for r in traj.step_log if r.accepted))
    summary["steps_rejected"] = int(sum(1 for r in traj.step_log if not r.accepted))
    summary["t_final"] = float(traj.times[-1])
    art = RunArtifacts(
        status="ok",
        exit_code=EXIT_OK,
        files={
            "moments.csv": _moments_csv(cfg, traj),
            "snapshots.csv": _snapshots_csv(cfg, traj),
            "steps.csv": _steps_csv(cfg, traj),
        },
        summary=summary,
    )
    return _finish(art, started)


def run_validate_kernels(cfg: SimConfig, samples: int = 24) -> RunArtifacts:
    """Evaluate the structural hypothesis checks and report a table."""
    started = time.monotonic()
    try:
        grid, kset, g0, ctl = build_problem(cfg)
        report = validate_hypotheses(kset, samples=samples)
        bounds = apriori_bounds(g0, kset, ctl.t_end)
    except Exception as exc:
        return _failure("validate-kernels", cfg, exc, started)
    summary = _base_summary("validate-kernels", cfg)
    summary["grid"] = grid.summary()
    summary["apriori"] = {"V1": bounds.V1, "V": bounds.V, "overflowed": bounds.overflowed}
    summary["hypotheses"] = [
        {"name": c.name, "passed": c.passed, "detail": c.detail, "witness": c.witness}
        for c in report
    ]
    summary["all_passed"] = report.passed
    status = "ok" if report.passed else "validation_failure"
    art = RunArtifacts(
        status=status,
        exit_code=EXIT_OK if report.passed else EXIT_VALIDATION,
        summary=summary,
    )
    return _finish(art, started)


def run_converge(cfg: SimConfig, doublings: int) -> RunArtifacts:
    """Truncation-doubling study; one CSV row per doubling."""
    started = time.monotonic()
    try:
        study = truncation_study(cfg, doublings, workers=worker_count())
        grid, kset, g0, ctl = build_problem(cfg)
        bounds = apriori_bounds(g0, kset, ctl.t_end)
    except Exception as exc:
        return _failure("converge", cfg, exc, started)
    summary = _base_summary("converge", cfg)
    summary["grid"] = grid.summary()
    summary["apriori"] = {"V1": bounds.V1, "V": bounds.V, "overflowed": bounds.overflowed}
    summary["levels"] = [
        {"level": lv.level, "n": lv.n, "cells": lv.cells, "distance": lv.distance}
        for lv in study.levels
    ]
    rows = [[lv.level, lv.n, lv.distance] for lv in study.levels[1:]]
    art = RunArtifacts(
        status="ok",
        exit_code=EXIT_OK,
        files={
            "truncation.csv": _csv(
                _header_lines(cfg, grid.summary()), ["level", "n", "distance"], rows
            )
        },
        summary=summary,
    )
    return _finish(art, started)


def run_perturb(cfg: SimConfig, delta: float) -> RunArtifacts:
    """Twin-run closeness trace for a relative perturbation ``delta``."""
    started = time.monotonic()
    try:
        report = perturbation_closeness(cfg, delta)
        grid, kset, g0, ctl = build_problem(cfg)
        bounds = apriori_bounds(g0, kset, ctl.t_end)
    except Exception as exc:
        return _failure("perturb", cfg, exc, started)
    summary = _base_summary("perturb", cfg)
    summary["grid"] = grid.summary()
    summary["apriori"] = {"V1": bounds.V1, "V": bounds.V, "overflowed": bounds.overflowed}
    summary["delta"] = delta
    summary["lambda_fit"] = report.lambda_fit
    summary["max_u"] = report.max_u
    summary["envelope_ok"] = report.envelope_ok()
    rows = [[t, u] for t, u in zip(report.times, report.u)]
    art = RunArtifacts(
        status="ok",
        exit_code=EXIT_OK,
        files={
            "perturbation.csv": _csv(_header_lines(cfg, grid.summary()), ["t", "u"], rows)
        },
        summary=summary,
    )
    return _finish(art, started)


def run_oracle(cases: int = 1000, seed: int = DEFAULT_SEED) -> RunArtifacts:
    """Randomized certification battery of the operator implementations."""
    started = time.monotonic()
    try:
        report = run_certification(n_cases=cases, seed=seed)
    except Exception as exc:
        return _failure("oracle", None, exc, started)
    summary = _base_summary("oracle", None)
    summary["oracle"] = {
        "cases": report.cases,
        "failures": report.failures,
        "max_rel_diff": report.max_rel_diff,
        "seed": report.seed,
        "elapsed_s": report.elapsed_s,
    }
    status = "ok" if report.passed else "numerical_failure"
    art = RunArtifacts(
        status=status,
        exit_code=EXIT_OK if report.passed else EXIT_NUMERICAL,
        summary=summary,
    )
    return _finish(art, started)
