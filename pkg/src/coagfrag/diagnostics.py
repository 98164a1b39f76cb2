"""Post-processing: moments, a-priori bounds, residuals, and study runs.

The analytical guarantees of the model are replaced here by computable
surrogates, each stated as a measured property:

* the Gronwall-type ceiling ``V(T)`` on the weighted norm of any solution
  (:func:`apriori_bounds` and :func:`check_apriori_containment`);
* the time-integrated residual of the weak formulation at probe cells
  (:func:`weak_residual`), evaluating the identity
  ``g(t) = g(0) + int_0^t rhs(g(s)) ds`` by trapezoidal quadrature over
  the logged states;
* self-convergence under domain/truncation doubling
  (:func:`truncation_study`);
* continuous dependence on the initial data as a stand-in for uniqueness
  (:func:`perturbation_closeness`);
* stability of high-order moments under domain enlargement
  (:func:`higher_moment_trace`), since finiteness on a fixed finite grid
  is vacuous.

All time quadrature is trapezoidal on the logged step points; nothing is
interpolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig, build_initial_density, build_kernel_set, build_problem
from .errors import ConfigurationError, DiagnosticsError
from .grid import SizeGrid, extend_grid
from .integrator import Trajectory, TimeControl, integrate, weighted_norm
from .kernels import KernelSet, fragment_count
from .operators import NumberDensity, build_tables, rhs


def moment(g: NumberDensity, r: float) -> float:
    """Discrete moment ``sum x_i^r g_i width_i`` of order ``r >= 0``."""
    grid = g.grid
    return float(np.sum(grid.pivots**r * g.values * grid.widths))


@dataclass(frozen=True)
class AprioriBounds:
    """Gronwall ceiling on the weighted norm over ``[0, T]``.

    ``V1`` bounds the particle count below unit volume, ``V = V1 + 2*M1``
    bounds the full (1+z)-weighted norm.  ``overflowed`` marks exponents
    too large for double precision; the bound still exists, it is just
    numerically unusable.
    """

    V1: float
    V: float
    norm_dz: float
    norm_zdz: float
    fragment_bound: int
    k2: float
    T: float
    overflowed: bool = False


def apriori_bounds(g0: NumberDensity, kset: KernelSet, T: float) -> AprioriBounds:
    """Evaluate the closed-form bound constants from the initial data.

    ``V1 = m0 * exp(4*N*k2*T*m1) + (m1/2) * (exp(4*N*k2*T*m1) - 1)`` with
    ``m0``, ``m1`` the discrete zeroth/first moments of the initial data
    and ``N`` the integer fragment bound; ``V = V1 + 2*m1``.
    """
    if T < 0.0:
        raise ConfigurationError(f"T={T}: must be >= 0")
    m0 = moment(g0, 0.0)
    m1 = moment(g0, 1.0)
    N = fragment_count(kset).bound
    exponent = 4.0 * N * kset.coll.k2 * T * m1
    overflow = exponent > math.log(np.finfo(float).max) - 10.0
    if overflow:
        v1 = math.inf
        v = math.inf
    else:
        growth = math.exp(exponent)
        v1 = m0 * growth + 0.5 * m1 * (growth - 1.0)
        v = v1 + 2.0 * m1
    return AprioriBounds(
        V1=v1, V=v, norm_dz=m0, norm_zdz=m1,
        fragment_bound=N, k2=kset.coll.k2, T=T, overflowed=overflow,
    )


def check_apriori_containment(traj: Trajectory, bounds: AprioriBounds) -> tuple[bool, float]:
    """Largest logged weighted norm against the ceiling ``V``."""
    norms = [weighted_norm(traj.grid, row) for row in traj.densities]
    peak = max(norms)
    return peak <= bounds.V, peak


@dataclass(frozen=True)
class WeakResidualReport:
    probe_cells: tuple[int, ...]
    times: np.ndarray
    residuals: np.ndarray  # (n_times, n_probes), absolute values
    normalization: float

    @property
    def max_normalized(self) -> float:
        if self.residuals.size == 0:
            return 0.0
        return float(self.residuals.max() / self.normalization)


def weak_residual(
    traj: Trajectory, kset: KernelSet, probe_cells: list[int] | tuple[int, ...]
) -> WeakResidualReport:
    """Residual of the time-integrated equation at selected probe cells.

    Rebuilds the rate at every logged state and compares the trapezoidal
    time integral with the actual increment ``g(t) - g(0)``.  The residual
    is reported in absolute value, normalized by the sup of the initial
    data.
    """
    if traj.times.size < 2:
        raise DiagnosticsError("weak_residual: need at least two logged states")
    probes = tuple(int(p) for p in probe_cells)
    for p in probes:
        if p < 0 or p >= traj.grid.cells:
            raise DiagnosticsError(f"weak_residual: probe cell {p} outside the grid")
    tables = build_tables(traj.grid, kset)
    rates = np.empty((traj.times.size, len(probes)))
    for k, row in enumerate(traj.densities):
        g = NumberDensity(traj.grid, row, float(traj.times[k]))
        rates[k] = rhs(kset, g, tables).total[list(probes)]
    dt = np.diff(traj.times)
    segment = 0.5 * dt[:, None] * (rates[1:] + rates[:-1])
    integral = np.vstack([np.zeros((1, len(probes))), np.cumsum(segment, axis=0)])
    increment = traj.densities[:, list(probes)] - traj.densities[0, list(probes)]
    residuals = np.abs(increment - integral)
    normalization = float(np.abs(traj.densities[0]).max())
    if normalization == 0.0:
        normalization = 1.0
    return WeakResidualReport(
        probe_cells=probes, times=traj.times.copy(), residuals=residuals,
        normalization=normalization,
    )


def weighted_l1_distance(
    grid_a: SizeGrid, values_a: np.ndarray, grid_b: SizeGrid, values_b: np.ndarray, z_hi: float
) -> float:
    """Exact ``(1+z)``-weighted L1 distance of two piecewise-constant densities.

    Both densities are step functions on their own grids; the difference is
    integrated exactly over the union of edges, restricted to
    ``(max(z_min), z_hi]``.  Outside its own grid a density is zero.
    """
    z_lo = max(grid_a.z_min, grid_b.z_min)
    if not z_hi > z_lo:
        raise ConfigurationError(f"z_hi={z_hi}: comparison window is empty (z_lo={z_lo})")
    cuts = np.unique(np.concatenate([
        grid_a.edges[(grid_a.edges >= z_lo) & (grid_a.edges <= z_hi)],
        grid_b.edges[(grid_b.edges >= z_lo) & (grid_b.edges <= z_hi)],
        [z_lo, z_hi],
    ]))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        ia = int(np.searchsorted(grid_a.edges, mid, side="left")) - 1
        ib = int(np.searchsorted(grid_b.edges, mid, side="left")) - 1
        va = values_a[ia] if 0 <= ia < grid_a.cells else 0.0
        vb = values_b[ib] if 0 <= ib < grid_b.cells else 0.0
        # int_a^b (1+z) dz = (b-a) + (b^2-a^2)/2
        total += abs(va - vb) * ((b - a) + 0.5 * (b * b - a * a))
    return float(total)


@dataclass(frozen=True)
class TruncationLevel:
    level: int
    n: float
    cells: int
    distance: float  # to the previous level; 0.0 for the base level


@dataclass(frozen=True)
class TruncationStudy:
    levels: tuple[TruncationLevel, ...]

    @property
    def distances(self) -> list[float]:
        return [lv.distance for lv in self.levels[1:]]


def truncation_study(cfg: SimConfig, doublings: int, workers: int = 1) -> TruncationStudy:
    """Measure self-convergence under doubling of the truncation volume.

    Each level extends the previous grid upward with cells of the same
    geometric ratio (the shared cells are reused bit-for-bit), doubles the
    cut volume ``n``, and re-runs the simulation.  The reported distance is
    the weighted L1 difference at ``t_end`` between consecutive solutions
    on the common domain.
    """
    if doublings < 1:
        raise ConfigurationError(f"doublings={doublings}: need at least 1")
    base_grid, _, _, ctl = build_problem(cfg)
    per_doubling = max(1, round(base_grid.cells * math.log(2.0) / math.log(base_grid.z_max / base_grid.z_min)))

    grids = [base_grid]
    for _ in range(doublings):
        grids.append(extend_grid(grids[-1], per_doubling))

    def run_level(grid: SizeGrid) -> tuple[SizeGrid, np.ndarray]:
        kset = _kset_with_cut(cfg, grid.z_max)
        g0 = build_initial_density(cfg, grid)
        traj = integrate(kset, g0, ctl)
        return grid, traj.final.values

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_level, grids))
    else:
        results = [run_level(g) for g in grids]

    levels = [TruncationLevel(level=0, n=grids[0].z_max, cells=grids[0].cells, distance=0.0)]
    for lv in range(1, len(results)):
        g_prev, v_prev = results[lv - 1]
        g_curr, v_curr = results[lv]
        dist = weighted_l1_distance(g_prev, v_prev, g_curr, v_curr, z_hi=g_prev.z_max)
        levels.append(
            TruncationLevel(level=lv, n=g_curr.z_max, cells=g_curr.cells, distance=dist)
        )
    return TruncationStudy(levels=tuple(levels))


def _kset_with_cut(cfg: SimConfig, n: float) -> KernelSet:
    doc = cfg.model_copy(deep=True)
    doc.kernels.n = None
    doc.grid.z_max = n
    return build_kernel_set(doc)


@dataclass(frozen=True)
class HigherMomentTrace:
    order: float
    times: np.ndarray
    values: np.ndarray
    integral: float  # trapezoidal int_0^t_end M_order(s) ds


def higher_moment_trace(traj: Trajectory, eta: float, eps: float) -> HigherMomentTrace:
    """Trace of ``M_(2+eta-eps)`` and its time integral along a trajectory.

    ``eta`` comes from the active kernel set (``1 + eta = (alpha+beta)/2``)
    and ``eps`` must lie in ``(0, 1+eta]``; the top end ``eps = 1+eta``
    degenerates to the invariant first moment.  On a finite grid the moment
    is trivially finite; the quantity worth watching is the growth of the
    integral when the domain is enlarged, which callers obtain by applying
    this to runs at successive truncation levels.
    """
    if not 0.0 < eps <= 1.0 + eta:
        raise ConfigurationError(f"eps={eps}: must lie in (0, 1+eta]=(0, {1.0 + eta}]")
    order = 2.0 + eta - eps
    x, dx = traj.grid.pivots, traj.grid.widths
    vals = traj.densities @ (x**order * dx)
    integral = float(np.trapezoid(vals, traj.times)) if traj.times.size > 1 else 0.0
    return HigherMomentTrace(order=order, times=traj.times.copy(), values=vals, integral=integral)


@dataclass(frozen=True)
class PerturbationReport:
    delta: float
    times: np.ndarray
    u: np.ndarray  # weighted L1 distance between the twin runs
    u0: float
    lambda_fit: float
    max_u: float

    def envelope_ok(self, slack: float = 1e-9) -> bool:
        if self.u0 == 0.0:
            return bool(np.all(self.u == 0.0))
        env = self.u0 * np.exp(self.lambda_fit * (self.times - self.times[0]))
        return bool(np.all(self.u <= env * (1.0 + slack)))


def perturbation_closeness(cfg: SimConfig, delta: float, dt: float | None = None) -> PerturbationReport:
    """Distance between runs from ``g0`` and ``(1+delta) g0`` over time.

    Both runs use the same fixed step sequence so states can be compared
    at identical times; ``delta = 0`` therefore gives ``u == 0`` exactly.
    ``lambda_fit`` is the smallest exponential rate whose envelope
    ``u0 * exp(lambda * t)`` contains the whole trace.
    """
    if delta < 0.0:
        raise ConfigurationError(f"delta={delta}: must be >= 0")
    grid, kset, g0, ctl = build_problem(cfg)
    h = dt if dt is not None else min(ctl.dt_max, ctl.t_end / 200.0)
    fixed = TimeControl(
        t_end=ctl.t_end, dt_init=h, safety=0.5, dt_min=min(h, ctl.dt_min),
        dt_max=h, snapshot_times=(), rel_tol=1e12,
    )
    tables = build_tables(grid, kset)
    base = integrate(kset, g0, fixed, tables=tables)
    bumped = integrate(kset, g0.with_values(g0.values * (1.0 + delta)), fixed, tables=tables)
    if base.times.size != bumped.times.size or not np.allclose(base.times, bumped.times, rtol=0, atol=1e-12):
        raise DiagnosticsError("perturbation_closeness: twin runs diverged in step sequence")
    w = (1.0 + grid.pivots) * grid.widths
    u = np.abs(base.densities - bumped.densities) @ w
    u0 = float(u[0])
    if u0 > 0.0:
        with np.errstate(divide="ignore"):
            slopes = np.log(np.maximum(u[1:], 1e-300) / u0) / (base.times[1:] - base.times[0])
        lam = float(np.max(slopes)) if slopes.size else 0.0
        lam = max(lam, 0.0)
    else:
        lam = 0.0
    return PerturbationReport(
        delta=delta, times=base.times.copy(), u=u, u0=u0,
        lambda_fit=lam, max_u=float(u.max()),
    )
