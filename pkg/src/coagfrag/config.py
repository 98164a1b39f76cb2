"""Run configuration: JSON schema, validation, and problem assembly.

A run is described by a single JSON document with a versioned schema key.
Parsing is refuse-by-default: kernel parameters outside the ranges under
which the model's guarantees hold are rejected with an error naming the
key and the violated condition, unless the caller explicitly opts out
(``allow_unvalidated``).  Joint inequalities between kernels (the H4
domination and the UH1 lower bound) are not parse-time refusals; they are
reported by the ``validate-kernels`` command.

The truncation volume always coincides with the grid's right edge; a
config may omit ``kernels.n`` (it defaults to ``grid.z_max``) but may not
contradict it.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.special import erf

from .errors import ConfigurationError
from .grid import SizeGrid, build_grid
from .integrator import TimeControl
from .kernels import BreakupKernelSpec, CoagKernelSpec, CollisionKernelSpec, KernelSet
from .operators import NumberDensity

SCHEMA_VERSION = 1


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    z_min: float = Field(gt=0)
    z_max: float = Field(gt=0)
    cells: int = Field(ge=2)


class KernelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k1: float = 0.0
    omega: float = 0.0
    k2: float = 0.0
    alpha: float = 0.5
    beta: float = 0.5
    nu: float = 0.0
    n: float | None = None


class InitialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["exponential", "gaussian_bump", "table"] = "exponential"
    scale: float = 1.0
    center: float = 1.0
    width: float = 0.25
    amplitude: float = 1.0
    path: str | None = None
    normalize: Literal["none", "number", "mass"] = "none"


class TimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_end: float = 1.0
    dt_init: float = 1e-3
    safety: float = 0.8
    dt_min: float = 1e-10
    dt_max: float = 0.1
    snapshot_times: list[float] = Field(default_factory=list)
    rel_tol: float = 1e-6


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "results"
    moment_orders: list[float] = Field(default_factory=list)


class SimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    grid: GridConfig
    kernels: KernelConfig = Field(default_factory=KernelConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)


def range_violations(cfg: SimConfig) -> list[str]:
    """Parameter-range checks behind the refuse-by-default policy."""
    k = cfg.kernels
    problems: list[str] = []
    if cfg.schema_version != SCHEMA_VERSION:
        problems.append(
            f"schema_version={cfg.schema_version} is not supported (expected {SCHEMA_VERSION})"
        )
    if not (math.isfinite(k.k1) and k.k1 >= 0.0):
        problems.append(f"k1={k.k1} violates (H3): k1 >= 0")
    if not (0.0 <= k.omega < 1.0):
        problems.append(f"omega={k.omega} violates (H3): 0 <= omega < 1")
    if not (math.isfinite(k.k2) and k.k2 >= 0.0):
        problems.append(f"k2={k.k2} violates (H4): k2 >= 0")
    if not (0.0 < k.alpha <= k.beta < 1.0):
        if k.alpha > k.beta:
            problems.append(f"alpha={k.alpha} > beta={k.beta} violates (H4): 0 < alpha <= beta < 1")
        else:
            problems.append(
                f"alpha={k.alpha}, beta={k.beta} violates (H4): 0 < alpha <= beta < 1"
            )
    if k.nu == -1.0:
        problems.append(
            "nu=-1 is refused: a single breakup would produce infinitely many fragments"
        )
    elif not (-1.0 < k.nu <= 0.0):
        problems.append(f"nu={k.nu} outside the physical range (-1, 0]")
    if cfg.grid.z_min >= cfg.grid.z_max:
        problems.append(f"grid: z_min={cfg.grid.z_min} must be below z_max={cfg.grid.z_max}")
    if k.n is not None and abs(k.n - cfg.grid.z_max) > 1e-12 * cfg.grid.z_max:
        problems.append(
            f"n={k.n} must equal grid.z_max={cfg.grid.z_max}: the truncation volume and the "
            "grid's right edge coincide by construction"
        )
    if cfg.initial.kind == "table" and not cfg.initial.path:
        problems.append("initial.path is required when initial.kind='table'")
    return problems


def parse_config(source: str | Path | dict, allow_unvalidated: bool = False) -> SimConfig:
    """Read and validate a config from a JSON file, JSON text, or a dict."""
    if isinstance(source, dict):
        payload = source
    else:
        try:
            is_file = Path(source).exists()
        except OSError:  # e.g. inline JSON long enough to overflow a path
            is_file = False
        if is_file:
            text = Path(source).read_text()
        else:
            text = str(source)
            if not text.lstrip().startswith("{"):
                raise ConfigurationError(f"config file not found: {source}")
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    try:
        cfg = SimConfig.model_validate(payload)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"config rejected: {details}") from exc
    problems = range_violations(cfg)
    if problems and not allow_unvalidated:
        raise ConfigurationError(
            "config refused (pass allow_unvalidated to override): " + "; ".join(problems)
        )
    return cfg


def config_hash(cfg: SimConfig) -> str:
    """Stable hash of the canonical JSON form, for output headers."""
    canonical = json.dumps(cfg.model_dump(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def build_kernel_set(cfg: SimConfig) -> KernelSet:
    k = cfg.kernels
    n = k.n if k.n is not None else cfg.grid.z_max
    return KernelSet(
        coag=CoagKernelSpec(k1=k.k1, omega=k.omega),
        coll=CollisionKernelSpec(k2=k.k2, alpha=k.alpha, beta=k.beta),
        brk=BreakupKernelSpec(nu=k.nu),
        n=float(n),
    )


def _cell_average_exponential(grid: SizeGrid, scale: float) -> np.ndarray:
    # g(z) = exp(-z/scale)/scale, averaged exactly over each cell.
    a, b = grid.edges[:-1], grid.edges[1:]
    return (np.exp(-a / scale) - np.exp(-b / scale)) / grid.widths


def _cell_average_gaussian(grid: SizeGrid, center: float, width: float, amplitude: float) -> np.ndarray:
    # Antiderivative of exp(-((z-c)/w)^2) evaluated at all cell boundaries.
    prim = 0.5 * math.sqrt(math.pi) * width * erf((grid.edges - center) / width)
    return amplitude * np.diff(prim) / grid.widths


def _table_density(grid: SizeGrid, path: str) -> np.ndarray:
    """Tabulated density: JSON {"z": [...], "g": [...]}, interpolated at pivots."""
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"initial.path: table file not found: {path}")
    try:
        doc = json.loads(p.read_text())
        z = np.asarray(doc["z"], dtype=float)
        gv = np.asarray(doc["g"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(
            f"initial.path: expected JSON with 'z' and 'g' arrays in {path}: {exc}"
        ) from exc
    if z.ndim != 1 or z.shape != gv.shape or z.size < 2:
        raise ConfigurationError("initial.path: 'z' and 'g' must be equal-length 1-D arrays")
    if np.any(np.diff(z) <= 0):
        raise ConfigurationError("initial.path: 'z' must be strictly increasing")
    if np.any(gv < 0):
        raise ConfigurationError("initial.path: tabulated density must be non-negative")
    vals = np.interp(grid.pivots, z, gv, left=0.0, right=0.0)
    return vals


def build_initial_density(cfg: SimConfig, grid: SizeGrid) -> NumberDensity:
    ic = cfg.initial
    if ic.kind == "exponential":
        if ic.scale <= 0:
            raise ConfigurationError(f"initial.scale={ic.scale}: must be positive")
        values = _cell_average_exponential(grid, ic.scale)
    elif ic.kind == "gaussian_bump":
        if ic.width <= 0 or ic.amplitude < 0:
            raise ConfigurationError("initial.gaussian_bump: width must be > 0, amplitude >= 0")
        values = _cell_average_gaussian(grid, ic.center, ic.width, ic.amplitude)
    else:
        values = _table_density(grid, ic.path or "")
    values = np.maximum(values, 0.0)
    if ic.normalize != "none":
        order = 0.0 if ic.normalize == "number" else 1.0
        total = float(np.sum(grid.pivots**order * values * grid.widths))
        if total <= 0.0:
            raise ConfigurationError("initial.normalize: cannot normalize an empty density")
        values = values / total
    return NumberDensity(grid=grid, values=values, time=0.0)


def build_time_control(cfg: SimConfig) -> TimeControl:
    t = cfg.time
    return TimeControl(
        t_end=t.t_end,
        dt_init=t.dt_init,
        safety=t.safety,
        dt_min=t.dt_min,
        dt_max=t.dt_max,
        snapshot_times=tuple(t.snapshot_times),
        rel_tol=t.rel_tol,
    )


def build_problem(cfg: SimConfig) -> tuple[SizeGrid, KernelSet, NumberDensity, TimeControl]:
    """Assemble grid, kernels, initial density and time control from a config."""
    grid = build_grid(cfg.grid.z_min, cfg.grid.z_max, cfg.grid.cells)
    kset = build_kernel_set(cfg)
    g0 = build_initial_density(cfg, grid)
    ctl = build_time_control(cfg)
    return grid, kset, g0, ctl


def builtin_configs() -> dict[str, SimConfig]:
    """The four stock configurations exercised by the verification suite.

    The mixed config uses a power-of-two volume span so that domain
    doublings in the truncation study extend the grid with identical
    ratio and exactly nested cells.
    """
    base_time = {"t_end": 1.0, "dt_init": 1e-3, "dt_max": 0.05, "rel_tol": 1e-6}
    configs = {
        "pure_coagulation": {
            "grid": {"z_min": 1e-4, "z_max": 50.0, "cells": 100},
            "kernels": {"k1": 1.0, "omega": 0.0, "k2": 0.0},
            "initial": {"kind": "exponential", "scale": 1.0, "normalize": "number"},
            "time": dict(base_time),
        },
        "pure_breakage": {
            "grid": {"z_min": 1e-4, "z_max": 10.0, "cells": 100},
            "kernels": {"k1": 0.0, "k2": 1.0, "alpha": 0.5, "beta": 0.5, "nu": 0.0},
            "initial": {"kind": "exponential", "scale": 1.0},
            "time": dict(base_time),
        },
        "mixed": {
            "grid": {"z_min": 10.0 / 1024.0, "z_max": 10.0, "cells": 100},
            "kernels": {"k1": 1.0, "omega": 0.0, "k2": 0.5, "alpha": 0.5, "beta": 0.5, "nu": -0.5},
            "initial": {"kind": "exponential", "scale": 1.0},
            "time": dict(base_time),
        },
        "h4_dominated": {
            "grid": {"z_min": 1e-4, "z_max": 10.0, "cells": 100},
            "kernels": {"k1": 1.0, "omega": 0.0, "k2": 0.1, "alpha": 0.5, "beta": 0.5, "nu": 0.0},
            "initial": {"kind": "exponential", "scale": 1.0},
            "time": dict(base_time),
        },
    }
    return {name: SimConfig.model_validate(doc) for name, doc in configs.items()}
