"""Exception hierarchy for the coagfrag package.

Configuration problems (bad grids, out-of-range kernel parameters,
mismatched truncation volumes) raise :class:`ConfigurationError`; runtime
numerical failures (blow-up, stiffness, negative densities beyond the
clipping threshold) raise subclasses of :class:`NumericalError`.  The CLI
maps the former to exit code 1 and the latter to exit code 2.
"""

from __future__ import annotations


class CoagFragError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CoagFragError):
    """Invalid configuration; the message names the offending field."""


class DomainError(CoagFragError):
    """Kernel evaluated outside its domain (non-positive volumes)."""


class NumericalError(CoagFragError):
    """A numerical procedure failed to produce a usable result."""


class QuadratureError(NumericalError):
    """Quadrature did not converge; carries the achieved residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NegativeDensityError(NumericalError):
    """Density went negative beyond the rounding-level clip threshold."""


class BlowUpError(NumericalError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, t: float | None = None, dt: float | None = None):
        super().__init__(message)
        self.t = t
        self.dt = dt


class StiffnessError(NumericalError):
    """Step size control drove dt below dt_min."""

    def __init__(self, message: str, t: float | None = None, dt: float | None = None):
        super().__init__(message)
        self.t = t
        self.dt = dt


class DiagnosticsError(CoagFragError):
    """A diagnostic was asked for data the trajectory does not carry."""
