"""Kernel families, truncation, and structural validation.

Three rate functions drive the dynamics:

* coagulation rate ``K(z, z1) = k1 * (1+z)^omega * (1+z1)^omega`` — the rate
  at which particles of volumes ``z`` and ``z1`` merge;
* collision rate ``C(z, z1) = k2 * (z^alpha * z1^beta + z1^alpha * z^beta)``
  — the rate of destructive encounters that shatter both partners;
* breakup density ``B(z | z1) = (nu+2) * z^nu / z1^(nu+1)`` for ``z < z1``
  (zero otherwise) — the fragment-size distribution left behind by a
  shattered particle of volume ``z1``.

The exponent ranges ``omega in [0, 1)``, ``0 < alpha <= beta < 1`` and
``nu in (-1, 0]`` are the structural conditions (labelled H1-H6 and UH1 in
the validation report) under which the model is well behaved; outside
``nu > -1`` a single breakup would spawn infinitely many fragments.

Truncation: the finite-domain approximating problem replaces ``K`` and
``C`` by cut-off kernels that vanish whenever ``z + z1 > n``.  The grid's
right edge must coincide with ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, QuadratureError
from .quadrature import integrate_singular

__all__ = [
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
    "BreakageIdentityReport",
    "HypothesisCheck",
    "HypothesisReport",
]


@dataclass(frozen=True)
class CoagKernelSpec:
    """Coagulation family ``k1 * (1+z)^omega * (1+z1)^omega``.

    The guaranteed regime is ``omega in [0, 1)``; that range is enforced by
    the configuration layer (refuse-by-default with an explicit override),
    while the type itself rejects only what the numerics cannot represent.
    """

    k1: float
    omega: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.k1) and self.k1 >= 0.0):
            raise ConfigurationError(f"k1={self.k1} violates (H3): k1 >= 0 required")
        if not (math.isfinite(self.omega) and self.omega >= 0.0):
            raise ConfigurationError(f"omega={self.omega}: must be finite and >= 0")


@dataclass(frozen=True)
class CollisionKernelSpec:
    """Collision family ``k2 * (z^alpha * z1^beta + z1^alpha * z^beta)``.

    Guaranteed regime: ``0 < alpha <= beta < 1`` (config-enforced).
    """

    k2: float
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.k2) and self.k2 >= 0.0):
            raise ConfigurationError(f"k2={self.k2} violates (H4): k2 >= 0 required")
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ConfigurationError(f"alpha={self.alpha}: must be finite and > 0")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ConfigurationError(f"beta={self.beta}: must be finite and > 0")


@dataclass(frozen=True)
class BreakupKernelSpec:
    """Breakup family ``(nu+2) * z^nu / z1^(nu+1)`` on ``z < z1``.

    ``nu > -1`` is a hard requirement (at ``nu = -1`` a single breakup
    yields infinitely many fragments and the fragment integrals diverge);
    the physical range ``nu in (-1, 0]`` is config-enforced.  The value at
    ``z == z1`` is fixed to 0 — a measure-zero convention that keeps
    integrals untouched and evaluation bit-reproducible.
    """

    nu: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > -1.0):
            raise ConfigurationError(
                f"nu={self.nu} outside the physical range (-1, 0]: "
                "at nu <= -1 a single breakup yields infinitely many fragments"
            )

    @property
    def zeta(self) -> float:
        """Expected fragments per breakup, ``(nu+2)/(nu+1)``."""
        return (self.nu + 2.0) / (self.nu + 1.0)


@dataclass(frozen=True)
class KernelSet:
    """Full kernel description plus the truncation volume ``n``."""

    coag: CoagKernelSpec
    coll: CollisionKernelSpec
    brk: BreakupKernelSpec
    n: float

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n > 0.0):
            raise ConfigurationError(f"n={self.n}: truncation volume must be positive")

    @property
    def zeta(self) -> float:
        return self.brk.zeta

    @property
    def fragment_bound(self) -> int:
        """Integer ceiling of zeta, used wherever a count bound is needed."""
        return math.ceil(self.zeta - 1e-12)

    @property
    def eta(self) -> float:
        """Exponent with ``1 + eta = (alpha + beta) / 2``."""
        return 0.5 * (self.coll.alpha + self.coll.beta) - 1.0

    @property
    def strong_fragmentation_constant(self) -> float:
        """Lower-bound constant ``B_a = 2 * (nu + 2)`` for the UH1 check."""
        return 2.0 * (self.brk.nu + 2.0)

    @property
    def tau2(self) -> float:
        """Singularity exponent ``-nu`` appearing in the H6 envelope."""
        return -self.brk.nu + 0.0  # normalizes -0.0

    def h6_envelope_constant(self, W: float) -> float:
        """Smallest admissible ``k(W) = (nu + 2) / W^(1 + nu)`` for H6."""
        if W <= 0.0:
            raise ConfigurationError(f"W={W}: must be positive")
        return (self.brk.nu + 2.0) / W ** (1.0 + self.brk.nu)


def _check_positive(name: str, *vals) -> None:
    for v in vals:
        arr = np.asarray(v, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError(f"{name}: volumes must be positive and finite")


def eval_K(kset: KernelSet, z, z1, truncated: bool = False):
    """Coagulation rate; zero above the cut ``z + z1 > n`` when truncated."""
    _check_positive("eval_K", z, z1)
    z = np.asarray(z, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    # grouping the two power factors first makes the swap bit-exact
    k = kset.coag.k1 * ((1.0 + z) ** kset.coag.omega * (1.0 + z1) ** kset.coag.omega)
    if truncated:
        k = np.where(z + z1 > kset.n, 0.0, k)
    return k if k.ndim else float(k)


def eval_C(kset: KernelSet, z, z1, truncated: bool = False):
    """Collision rate; zero above the cut ``z + z1 > n`` when truncated."""
    _check_positive("eval_C", z, z1)
    z = np.asarray(z, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    a, b = kset.coll.alpha, kset.coll.beta
    c = kset.coll.k2 * (z**a * z1**b + z1**a * z**b)
    if truncated:
        c = np.where(z + z1 > kset.n, 0.0, c)
    return c if c.ndim else float(c)


def eval_B(kset: KernelSet, z, z1):
    """Breakup fragment density; supported on ``z < z1`` only."""
    _check_positive("eval_B", z, z1)
    z = np.asarray(z, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    nu = kset.brk.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        body = (nu + 2.0) * z**nu / z1 ** (nu + 1.0)
    b = np.where(z < z1, body, 0.0)
    return b if b.ndim else float(b)


@dataclass(frozen=True)
class FragmentCount:
    zeta: float
    bound: int


def fragment_count(src: KernelSet | BreakupKernelSpec | float) -> FragmentCount:
    """Expected fragments per breakup and the integer bound ``ceil(zeta)``.

    ``zeta = (nu+2)/(nu+1)`` is strictly decreasing in ``nu`` on ``(-1, 0]``,
    equals 2 (binary breakup) at ``nu = 0`` and diverges as ``nu -> -1``.
    """
    if isinstance(src, KernelSet):
        nu = src.brk.nu
    elif isinstance(src, BreakupKernelSpec):
        nu = src.nu
    else:
        nu = float(src)
        if not (math.isfinite(nu) and nu > -1.0):
            raise ConfigurationError(
                f"nu={nu} outside the physical range (-1, 0]: "
                "at nu <= -1 a single breakup yields infinitely many fragments"
            )
    zeta = (nu + 2.0) / (nu + 1.0)
    return FragmentCount(zeta=zeta, bound=math.ceil(zeta - 1e-12))


@dataclass(frozen=True)
class BreakageIdentityReport:
    """Quadrature check of the fragment-count and fragment-mass identities."""

    z1: float
    quad_points: int
    number_value: float
    mass_value: float
    number_error: float
    mass_error: float


def check_breakage_identities(
    kset: KernelSet, z1: float, quad_points: int = 64
) -> BreakageIdentityReport:
    """Verify ``int_0^z1 B dz = zeta`` and ``int_0^z1 z B dz = z1`` numerically.

    Uses the Jacobi-weighted rule so the ``z^nu`` endpoint factor sits in the
    quadrature weight.  Convergence is monitored by comparing against the
    rule with twice the nodes; disagreement raises :class:`QuadratureError`
    with the achieved residual.
    """
    if quad_points < 16:
        raise ConfigurationError(f"quad_points={quad_points}: need at least 16")
    if not (math.isfinite(z1) and z1 > 0.0):
        raise DomainError(f"z1={z1}: must be positive")
    nu = kset.brk.nu
    zeta = kset.zeta

    def regular_number(z):
        # B with the z^nu singular factor removed; Gauss nodes never touch z1.
        return eval_B(kset, z, z1) * z ** (-nu)

    def regular_mass(z):
        return z * regular_number(z)

    number = float(integrate_singular(regular_number, z1, nu, quad_points))
    mass = float(integrate_singular(regular_mass, z1, nu, quad_points))
    number_ref = float(integrate_singular(regular_number, z1, nu, 2 * quad_points))
    mass_ref = float(integrate_singular(regular_mass, z1, nu, 2 * quad_points))

    drift = max(abs(number - number_ref) / max(zeta, 1.0), abs(mass - mass_ref) / z1)
    if drift > 1e-6:
        raise QuadratureError(
            f"breakage identity quadrature did not converge at {quad_points} points "
            f"(node-doubling residual {drift:.3e})",
            residual=drift,
        )
    return BreakageIdentityReport(
        z1=z1,
        quad_points=quad_points,
        number_value=number,
        mass_value=mass,
        number_error=abs(number - zeta),
        mass_error=abs(mass - z1),
    )


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    detail: str
    witness: dict | None = None


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[HypothesisCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __iter__(self):
        return iter(self.checks)

    def by_name(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _lattice(lo: float, hi: float, count: int) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def validate_hypotheses(kset: KernelSet, samples: int = 24) -> HypothesisReport:
    """Check the structural conditions H1-H6 and UH1 on sampled lattices.

    Failures never raise; each report entry records the violating sample
    point so the CLI can print it as a witness.

    * H1/H2 — non-negativity and symmetry of K and C on a log-spaced lattice.
    * H3 — K sits on (here: equals) its growth envelope
      ``k1 * (1+z)^omega * (1+z1)^omega``.
    * H4 — local domination ``K >= 2 * (zeta - 1) * C`` on the unit box
      ``(0,1) x (0,1)``.  The box is fixed in grid units.
    * H5 — admissibility of the breakup singularity, decided analytically:
      a Hoelder exponent ``p > 1`` with ``nu > -1/p`` and
      ``alpha >= 1 - 1/p`` exists precisely when ``nu > -1`` and
      ``alpha > 0``.
    * H6 — envelope ``B <= k(W) * z^(-tau2)`` with ``tau2 = -nu`` and
      ``k(W) = (nu+2) / W^(1+nu)`` for parents above the threshold ``W``.
    * UH1 — strong-fragmentation lower bound
      ``B * C >= B_a * z1^eta * z2^(1+eta)`` with ``B_a = 2 * (nu + 2)``
      and ``1 + eta = (alpha + beta) / 2``, for parents ``z1 >= 1``.
    """
    if samples < 4:
        raise ConfigurationError(f"samples={samples}: need at least 4 per axis")
    checks: list[HypothesisCheck] = []
    alpha, beta = kset.coll.alpha, kset.coll.beta
    nu = kset.brk.nu
    zeta = kset.zeta
    rtol = 1e-12

    span = _lattice(1e-6, max(10.0, kset.n), samples)
    zz, zz1 = np.meshgrid(span, span, indexing="ij")

    # H1: non-negativity.
    kv = eval_K(kset, zz, zz1)
    cv = eval_C(kset, zz, zz1)
    neg = (kv < 0.0) | (cv < 0.0)
    if np.any(neg):
        i, j = np.argwhere(neg)[0]
        checks.append(
            HypothesisCheck(
                "H1",
                False,
                "K or C negative",
                {"z": float(zz[i, j]), "z1": float(zz1[i, j])},
            )
        )
    else:
        checks.append(HypothesisCheck("H1", True, "K, C >= 0 on sampled lattice"))

    # H2: symmetry (exact for the built-in families).
    ks = eval_K(kset, zz1, zz)
    cs = eval_C(kset, zz1, zz)
    asym = (kv != ks) | (cv != cs)
    if np.any(asym):
        i, j = np.argwhere(asym)[0]
        checks.append(
            HypothesisCheck(
                "H2",
                False,
                "symmetry broken",
                {"z": float(zz[i, j]), "z1": float(zz1[i, j])},
            )
        )
    else:
        checks.append(HypothesisCheck("H2", True, "K, C exactly symmetric on lattice"))

    # H3: growth envelope (equality by construction for the built-in family).
    envelope = kset.coag.k1 * ((1.0 + zz) ** kset.coag.omega * (1.0 + zz1) ** kset.coag.omega)
    over = kv > envelope * (1.0 + rtol) + rtol
    if np.any(over):
        i, j = np.argwhere(over)[0]
        checks.append(
            HypothesisCheck(
                "H3",
                False,
                "K exceeds its growth envelope",
                {"z": float(zz[i, j]), "z1": float(zz1[i, j]), "K": float(kv[i, j])},
            )
        )
    else:
        checks.append(
            HypothesisCheck("H3", True, f"K <= k1 (1+z)^w (1+z1)^w with k1={kset.coag.k1}, w={kset.coag.omega}")
        )

    # H4: local domination on the unit box.
    unit = _lattice(1e-6, 1.0 - 1e-9, samples)
    uz, uz1 = np.meshgrid(unit, unit, indexing="ij")
    lhs = eval_K(kset, uz, uz1)
    rhs_dom = 2.0 * (zeta - 1.0) * eval_C(kset, uz, uz1)
    margin = lhs - rhs_dom
    scale = np.maximum(np.abs(lhs), np.abs(rhs_dom))
    bad = margin < -rtol * np.maximum(scale, 1.0)
    if np.any(bad):
        flat = np.argmin(margin)
        i, j = np.unravel_index(flat, margin.shape)
        checks.append(
            HypothesisCheck(
                "H4",
                False,
                "K < 2 (zeta - 1) C inside the unit box",
                {
                    "z": float(uz[i, j]),
                    "z1": float(uz1[i, j]),
                    "K": float(lhs[i, j]),
                    "2(zeta-1)C": float(rhs_dom[i, j]),
                },
            )
        )
    else:
        checks.append(
            HypothesisCheck("H4", True, f"K >= 2 (zeta - 1) C on (0,1)^2 with zeta={zeta:.6g}")
        )

    # H5: analytic admissibility of the singularity.
    h5_ok = alpha > 0.0 and nu > -1.0
    if h5_ok:
        if nu < 0.0:
            p_star = min(1.0 / (1.0 - alpha), 0.5 * (1.0 - 1.0 / nu))
        else:
            p_star = 1.0 / (1.0 - alpha)
        checks.append(
            HypothesisCheck(
                "H5", True, f"admissible: Hoelder exponent p={p_star:.6g} certifies the bound"
            )
        )
    else:
        checks.append(
            HypothesisCheck(
                "H5",
                False,
                "no Hoelder exponent p > 1 exists (requires nu > -1 and alpha > 0)",
                {"alpha": alpha, "nu": nu},
            )
        )

    # H6: pointwise envelope for parents above W.
    W = 1.0
    kW = kset.h6_envelope_constant(W)
    z_small = _lattice(1e-6 * W, W * (1.0 - 1e-9), samples)
    z1_large = _lattice(W * (1.0 + 1e-9), 1e3 * W, samples)
    hz, hz1 = np.meshgrid(z_small, z1_large, indexing="ij")
    bval = eval_B(kset, hz, hz1)
    benv = kW * hz ** (-kset.tau2)
    bad = bval > benv * (1.0 + rtol)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        checks.append(
            HypothesisCheck(
                "H6",
                False,
                "B exceeds k(W) z^-tau2",
                {"z": float(hz[i, j]), "z1": float(hz1[i, j]), "B": float(bval[i, j])},
            )
        )
    else:
        checks.append(
            HypothesisCheck("H6", True, f"B <= k(W) z^-tau2 with W={W}, k(W)={kW:.6g}, tau2={kset.tau2:.6g}")
        )

    # UH1: strong-fragmentation lower bound for parents z1 >= 1.
    B_a = kset.strong_fragmentation_constant
    eta = kset.eta
    detail_extra = ""
    if 1.0 + eta >= 1.0:
        detail_extra = " [warning: (alpha+beta)/2 >= 1 conflicts with the alpha, beta < 1 ranges]"
    z1_ax = _lattice(1.0, 1e3, samples)
    z2_ax = _lattice(1e-3, 1e3, samples)
    frac = _lattice(1e-6, 1.0 - 1e-9, samples)
    g1, g2, gf = np.meshgrid(z1_ax, z2_ax, frac, indexing="ij")
    zf = g1 * gf
    lhs_u = eval_B(kset, zf, g1) * eval_C(kset, g1, g2)
    rhs_u = B_a * g1**eta * g2 ** (1.0 + eta)
    deficit = lhs_u - rhs_u
    tol_u = rtol * np.maximum(np.maximum(np.abs(lhs_u), np.abs(rhs_u)), 1.0)
    bad = deficit < -tol_u
    if np.any(bad):
        flat = np.argmin(deficit / np.maximum(rhs_u, 1e-300))
        i, j, k = np.unravel_index(flat, deficit.shape)
        checks.append(
            HypothesisCheck(
                "UH1",
                False,
                "B*C < B_a z1^eta z2^(1+eta)" + detail_extra,
                {
                    "z": float(zf[i, j, k]),
                    "z1": float(g1[i, j, k]),
                    "z2": float(g2[i, j, k]),
                    "B*C": float(lhs_u[i, j, k]),
                    "bound": float(rhs_u[i, j, k]),
                },
            )
        )
    else:
        checks.append(
            HypothesisCheck(
                "UH1",
                True,
                f"B*C >= B_a z1^eta z2^(1+eta) with B_a={B_a:.6g}, eta={eta:.6g}" + detail_extra,
            )
        )

    return HypothesisReport(checks=tuple(checks))
