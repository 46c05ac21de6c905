"""
Exception hierarchy for homoglab.

ValidationError subclasses map to CLI exit status 1, NumericalError
subclasses to exit status 2.
"""

from typing import Optional, Sequence


class HomogLabError(Exception):
    """Base class for all homoglab errors."""


class ValidationError(HomogLabError, ValueError):
    """Invalid input: geometry, grid, coefficient or configuration."""


class GeometryError(ValidationError):
    pass


class GridCompatibilityError(ValidationError):
    """Grid resolution does not resolve the inclusion faces."""

    def __init__(self, message: str, suggested_resolution: Optional[int] = None):
        if suggested_resolution is not None:
            message = f"{message} (smallest compatible resolution: {suggested_resolution})"
        super().__init__(message)
        self.suggested_resolution = suggested_resolution


class CoefficientError(ValidationError):
    """Coefficient evaluator produced an invalid value."""

    def __init__(self, message: str, point: Optional[Sequence[float]] = None):
        if point is not None:
            message = f"{message} at y={tuple(float(p) for p in point)}"
        super().__init__(message)
        self.point = None if point is None else tuple(float(p) for p in point)


class ConfigError(ValidationError):
    pass


class NumericalError(HomogLabError, RuntimeError):
    """A numerical stage failed."""


class AssemblyError(NumericalError):
    pass


class SolverConvergenceError(NumericalError):
    pass


class EigenSolverError(NumericalError):
    pass


class SpectrumError(NumericalError):
    """Spectral data insufficient for the requested quantity."""


class PoleError(ValidationError):
    """Evaluation point too close to a pole of the beta function."""

    def __init__(self, message: str, pole: float):
        super().__init__(f"{message} (pole at {pole:.12g})")
        self.pole = pole


class WindowError(ValidationError):
    """Evaluation point outside the trusted spectral window."""

    def __init__(self, message: str, cap: float):
        super().__init__(f"{message} (window cap {cap:.12g})")
        self.cap = cap
