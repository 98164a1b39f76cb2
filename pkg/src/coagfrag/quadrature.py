"""Singular-endpoint quadrature for breakup integrals.

The breakup density behaves like ``z^nu`` with ``nu in (-1, 0]`` near the
origin, so plain Gauss-Legendre loses orders of accuracy for ``nu < 0``.
Integrals of the form ``int_0^y z^nu * f(z) dz`` are instead evaluated with
a Gauss-Jacobi rule in the scaled variable ``u = z / y``: the endpoint
singularity is absorbed into the quadrature weight ``u^nu`` and only the
regular factor ``f`` is sampled.  For power-law integrands the rule is
exact up to polynomial degree ``2*n - 1`` in ``u``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def jacobi_unit_rule(npts: int, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ``int_0^1 u^nu f(u) du ~= sum w_q f(u_q)``.

    Derived from the Gauss-Jacobi rule for the weight ``(1+x)^nu`` on
    ``[-1, 1]`` via ``u = (1 + x) / 2``.
    """
    if npts < 1:
        raise ValueError(f"npts must be >= 1, got {npts}")
    if nu <= -1.0:
        raise ValueError(f"weight exponent must exceed -1, got {nu}")
    x, w = roots_jacobi(npts, 0.0, nu)
    u = 0.5 * (x + 1.0)
    w = w * 0.5 ** (nu + 1.0)
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


def integrate_singular(
    f: Callable[[np.ndarray], np.ndarray],
    upper: float | np.ndarray,
    nu: float,
    npts: int,
) -> float | np.ndarray:
    """Evaluate ``int_0^upper z^nu f(z) dz`` with the Jacobi-weighted rule.

    ``upper`` may be an array; the quadrature is applied to each endpoint
    (vectorized over a node matrix).  ``f`` must accept arrays.
    """
    u, w = jacobi_unit_rule(npts, nu)
    y = np.asarray(upper, dtype=float)
    nodes = y[..., None] * u  # shape (..., npts)
    vals = f(nodes)
    acc = vals @ w
    out = np.power(y, nu + 1.0) * acc
    if np.isscalar(upper) or (isinstance(upper, float)):
        return float(out)
    return out
