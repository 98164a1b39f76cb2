"""coagfrag: a solver for coagulation with collision-induced breakup.

The package discretizes the nonlinear population balance in which pairs of
particles either merge (coagulation) or shatter each other into power-law
fragment showers (collisional breakup), on a geometric volume grid with a
mass-exact fixed-pivot scheme, and verifies its own conservation laws,
bound constants and convergence behavior.

Layout: :mod:`coagfrag.grid`, :mod:`coagfrag.kernels`,
:mod:`coagfrag.operators`, :mod:`coagfrag.integrator` form the numerical
core; :mod:`coagfrag.diagnostics` and :mod:`coagfrag.oracle` check it;
:mod:`coagfrag.runs` orchestrates commands; :mod:`coagfrag.service` is the
HTTP face and :mod:`coagfrag.cli` its thin client.
"""

__version__ = "0.1.0"

from .grid import SizeGrid, build_grid, grid_from_edges, locate
from .kernels import (
    BreakupKernelSpec,
    CoagKernelSpec,
    CollisionKernelSpec,
    KernelSet,
    check_breakage_identities,
    eval_B,
    eval_C,
    eval_K,
    fragment_count,
    validate_hypotheses,
)
from .operators import NumberDensity, RhsBreakdown, breakage_terms, build_tables, coagulation_terms, rhs
from .integrator import TimeControl, Trajectory, integrate, step
from .config import SimConfig, builtin_configs, config_hash, parse_config

__all__ = [
    "__version__",
    "SizeGrid",
    "build_grid",
    "grid_from_edges",
    "locate",
    "CoagKernelSpec",
    "CollisionKernelSpec",
    "BreakupKernelSpec",
    "KernelSet",
    "eval_K",
    "eval_C",
    "eval_B",
    "fragment_count",
    "check_breakage_identities",
    "validate_hypotheses",
    "NumberDensity",
    "RhsBreakdown",
    "coagulation_terms",
    "breakage_terms",
    "rhs",
    "build_tables",
    "TimeControl",
    "Trajectory",
    "step",
    "integrate",
    "SimConfig",
    "parse_config",
    "config_hash",
    "builtin_configs",
]
