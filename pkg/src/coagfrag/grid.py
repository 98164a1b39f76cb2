"""Geometric discretization of the particle-volume axis.

All integral operators are approximated on a fixed geometric grid of cells
``(e_{i-1}, e_i]`` with midpoint pivots ``x_i = (e_{i-1} + e_i) / 2``.  The
geometric spacing resolves power-law kernels spanning many decades of
volume, which a uniform grid cannot do near the origin.  The left cutoff
``z_min > 0`` stands in for the open origin of the continuous model; it is
a convergence knob and is reported in every output header.

Cells are left-open right-closed so that :func:`locate` is unambiguous at
cell boundaries.  Grids are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Relative tolerance for the constant-ratio invariant.
RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class SizeGrid:
    """Geometric partition of the volume axis.

    Attributes
    ----------
    edges:
        Cell boundaries ``e_0 < e_1 < ... < e_I``, all positive.
    pivots:
        Midpoint representative volumes, one per cell.
    widths:
        Cell widths ``e_i - e_{i-1}``.
    ratio:
        Common geometric factor ``e_i / e_{i-1}``.
    """

    edges: np.ndarray
    pivots: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    widths: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    ratio: float = 0.0

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ConfigurationError("edges: need at least two boundaries")
        if not np.all(np.isfinite(edges)):
            raise ConfigurationError("edges: non-finite boundary")
        if edges[0] <= 0.0:
            raise ConfigurationError("edges: boundaries must be positive")
        if not np.all(np.diff(edges) > 0.0):
            raise ConfigurationError("edges: boundaries must be strictly increasing")
        ratios = edges[1:] / edges[:-1]
        q = float(ratios[0])
        if np.any(np.abs(ratios - q) > RATIO_RTOL * q):
            raise ConfigurationError("edges: geometric ratio is not constant to 1e-12")
        edges.setflags(write=False)
        pivots = 0.5 * (edges[:-1] + edges[1:])
        widths = np.diff(edges)
        pivots.setflags(write=False)
        widths.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "pivots", pivots)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "ratio", q)

    @property
    def cells(self) -> int:
        return self.edges.size - 1

    @property
    def z_min(self) -> float:
        return float(self.edges[0])

    @property
    def z_max(self) -> float:
        return float(self.edges[-1])

    def summary(self) -> dict:
        """Grid description serialized into every output file header."""
        return {
            "z_min": self.z_min,
            "z_max": self.z_max,
            "cells": self.cells,
            "ratio": self.ratio,
        }


def build_grid(z_min: float, z_max: float, cells: int) -> SizeGrid:
    """Construct a geometric grid with ``cells`` cells on ``[z_min, z_max]``.

    The ratio ``q = (z_max / z_min)^(1/cells)`` is derived, never user-set,
    so that the grid specification cannot be internally inconsistent.
    Rebuilding from the same arguments reproduces identical edges
    bit-for-bit.
    """
    if not (isinstance(cells, (int, np.integer)) and not isinstance(cells, bool)):
        raise ConfigurationError(f"cells: expected an integer, got {cells!r}")
    if cells < 2:
        raise ConfigurationError(f"cells: need at least 2 cells, got {cells}")
    if not (math.isfinite(z_min) and z_min > 0.0):
        raise ConfigurationError(f"z_min: must be positive and finite, got {z_min}")
    if not (math.isfinite(z_max) and z_max > 0.0):
        raise ConfigurationError(f"z_max: must be positive and finite, got {z_max}")
    if z_min >= z_max:
        raise ConfigurationError(
            f"z_min/z_max: degenerate interval, need z_min < z_max, got [{z_min}, {z_max}]"
        )
    edges = np.geomspace(z_min, z_max, int(cells) + 1)
    # geomspace pins both endpoints exactly; interior points are log-spaced.
    return SizeGrid(edges=edges)


def grid_from_edges(edges: np.ndarray) -> SizeGrid:
    """Build a grid from explicit boundaries (must be geometric)."""
    return SizeGrid(edges=np.asarray(edges, dtype=float))


def extend_grid(grid: SizeGrid, extra_cells: int) -> SizeGrid:
    """Append ``extra_cells`` cells above ``z_max`` keeping the same ratio.

    The original cells are reused bit-for-bit, so two solutions computed on
    a grid and its extension can be compared cell-by-cell on the common
    domain.
    """
    if extra_cells < 1:
        raise ConfigurationError(f"extra_cells: must be >= 1, got {extra_cells}")
    q = grid.ratio
    tail = grid.z_max * np.power(q, np.arange(1, extra_cells + 1, dtype=float))
    return SizeGrid(edges=np.concatenate([grid.edges, tail]))


def locate(grid: SizeGrid, z: float) -> int | None:
    """Return the 0-based cell index ``i`` with ``e_i < z <= e_{i+1}``.

    Returns ``None`` when ``z`` falls at or below the left boundary or
    above the right boundary.  Total function: never raises.
    """
    if not math.isfinite(z):
        return None
    idx = int(np.searchsorted(grid.edges, z, side="left")) - 1
    if idx < 0 or idx >= grid.cells:
        return None
    return idx
