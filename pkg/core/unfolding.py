"""
Discrete unfolding, local averaging and the cellwise projection.

Grid functions on Ω are piecewise constant on the n·M fine grid and are
stored as arrays of shape (N,)*d with N = n·M. A two-scale function keeps
x at the same fine resolution and y on the M-grid of Y, laid out as
(ε-cell n, x-subcell j, y-subcell k), each index flattened in C order.
Unfolding is then a pure re-indexing and every identity below is exact
up to rounding.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss

from analytics.rates import SlopeFit, fit_loglog_slope
from core.exceptions import GridCompatibilityError, ValidationError
from core.geometry import StructuredGrid, lattice_size
from monitoring.audit import log_event

logger = logging.getLogger(__name__)

QUADRATURE_POINTS = 24


@dataclass(frozen=True)
class UnfoldingGrid:
    """ε-lattice of n cells per axis, each carrying an M-grid."""
    dim: int
    n: int
    subcells: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dimension {self.dim} not supported (1 or 2)")
        if self.n < 1 or self.subcells < 1:
            raise ValidationError(f"invalid lattice n={self.n}, M={self.subcells}")

    @classmethod
    def for_epsilon(cls, dim: int, epsilon, subcells: int) -> "UnfoldingGrid":
        return cls(dim=dim, n=lattice_size(epsilon), subcells=int(subcells))

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n

    @property
    def resolution(self) -> int:
        return self.n * self.subcells

    @property
    def h(self) -> float:
        return 1.0 / self.resolution

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def two_scale_shape(self) -> Tuple[int, int, int]:
        return (self.n ** self.dim, self.subcells ** self.dim, self.subcells ** self.dim)

    @property
    def omega_weight(self) -> float:
        return self.h ** self.dim

    @property
    def two_scale_weight(self) -> float:
        return self.h ** self.dim / self.subcells ** self.dim

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise GridCompatibilityError(
                f"grid function of shape {u.shape} does not match lattice n={self.n}, M={self.subcells} "
                f"(expected {self.shape})")
        return u

    def split(self, u: np.ndarray) -> np.ndarray:
        """(N,)*d -> (n^d, M^d): ε-cell index and position inside the cell."""
        d, n, M = self.dim, self.n, self.subcells
        blocks = u.reshape((n, M) * d)
        order = tuple(range(0, 2 * d, 2)) + tuple(range(1, 2 * d, 2))
        return blocks.transpose(order).reshape(n ** d, M ** d)

    def merge(self, cells: np.ndarray) -> np.ndarray:
        """Inverse of split."""
        d, n, M = self.dim, self.n, self.subcells
        blocks = cells.reshape((n,) * d + (M,) * d)
        order = tuple(_interleaved_axes(d))
        return blocks.transpose(order).reshape(self.shape)

    def cell_centers(self) -> List[np.ndarray]:
        axis = (np.arange(self.resolution) + 0.5) * self.h
        return np.meshgrid(*([axis] * self.dim), indexing="ij")

    def y_centers(self) -> List[np.ndarray]:
        axis = (np.arange(self.subcells) + 0.5) / self.subcells
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return [m.reshape(-1) for m in mesh]

    def sample(self, func: Callable[..., np.ndarray]) -> np.ndarray:
        """func(x_1, ..., x_d) at fine cell centers."""
        return np.asarray(func(*self.cell_centers()), dtype=float) * np.ones(self.shape)

    def l2_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.omega_weight * np.sum(self.check(u) ** 2)))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(self.omega_weight * np.sum(self.check(u) * self.check(v)))


def _interleaved_axes(d: int):
    """Axis order taking (n_0..n_{d-1}, k_0..k_{d-1}) to (n_0, k_0, n_1, k_1, ...)."""
    for axis in range(d):
        yield axis
        yield d + axis


@dataclass
class TwoScaleGridFunction:
    """Element of L²(Ω̂_ε × Y), values of shape (n^d, M^d, M^d)."""
    grid: UnfoldingGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.two_scale_shape:
            raise GridCompatibilityError(
                f"two-scale values of shape {self.values.shape}, expected {self.grid.two_scale_shape}")

    @classmethod
    def random(cls, grid: UnfoldingGrid, rng: np.random.Generator) -> "TwoScaleGridFunction":
        return cls(grid, rng.standard_normal(grid.two_scale_shape))

    @classmethod
    def from_profile(cls, grid: UnfoldingGrid, u: np.ndarray, profile: np.ndarray) -> "TwoScaleGridFunction":
        """φ(x, y) = u(x)·g(y) with g sampled on the M-grid of Y."""
        cells = grid.split(grid.check(u))
        return cls(grid, cells[:, :, None] * np.asarray(profile, dtype=float)[None, None, :])

    def norm(self) -> float:
        return float(np.sqrt(self.grid.two_scale_weight * np.sum(self.values ** 2)))

    def quadrature_norm(self) -> float:
        """Cell-by-cell product quadrature: Σ_n ε^d ∫_Y ∫_Y |φ|²."""
        g = self.grid
        per_cell = np.mean(self.values ** 2, axis=(1, 2))
        return float(np.sqrt(np.sum(per_cell) * g.epsilon ** g.dim))

    def inner(self, other: "TwoScaleGridFunction") -> float:
        return float(self.grid.two_scale_weight * np.sum(self.values * other.values))

    def __sub__(self, other: "TwoScaleGridFunction") -> "TwoScaleGridFunction":
        return TwoScaleGridFunction(self.grid, self.values - other.values)


def unfold(u: np.ndarray, grid: UnfoldingGrid) -> TwoScaleGridFunction:
    """(T̃_ε u)(n, y) = u(εn + εy)."""
    cells = grid.split(grid.check(u))
    return TwoScaleGridFunction(grid, np.broadcast_to(cells[:, None, :], grid.two_scale_shape).copy())


def average(phi: TwoScaleGridFunction) -> np.ndarray:
    """(Ũ_ε φ)(x) = ∫_Y φ(ε[x/ε] + εz, {x/ε}) dz."""
    return phi.grid.merge(phi.values.mean(axis=1))


def project(phi: TwoScaleGridFunction) -> TwoScaleGridFunction:
    """P_ε = T̃_ε ∘ Ũ_ε: cell average in x, y untouched."""
    return unfold(average(phi), phi.grid)


def embed(u: np.ndarray, grid: UnfoldingGrid) -> TwoScaleGridFunction:
    """(ι u)(x, y) = u(x)."""
    cells = grid.split(grid.check(u))
    return TwoScaleGridFunction(grid, np.broadcast_to(cells[:, :, None], grid.two_scale_shape).copy())


def y_mean(phi: TwoScaleGridFunction) -> np.ndarray:
    """⟨φ⟩_Y as a grid function on Ω."""
    return phi.grid.merge(phi.values.mean(axis=2))


def cell_means(u: np.ndarray, grid: UnfoldingGrid) -> np.ndarray:
    """Mean of u over each ε-cell, i.e. the y-mean of T̃_ε u, shape (n^d,)."""
    return grid.split(grid.check(u)).mean(axis=1)


def nodal_to_cells(values: np.ndarray, grid: StructuredGrid) -> np.ndarray:
    """Corner average of nodal values on a Dirichlet grid, shape (r,)*d."""
    values = np.asarray(values, dtype=float)
    return values[grid.cell_nodes()].mean(axis=1).reshape(grid.resolution)


# --- smooth test families ------------------------------------------------------

@dataclass(frozen=True)
class SmoothFunction:
    name: str
    value: Callable[..., np.ndarray]
    gradient: Callable[..., Sequence[np.ndarray]]

    def h1_norm(self, dim: int, points: int = QUADRATURE_POINTS) -> float:
        """‖u‖_{H¹(Ω)} by tensor Gauss-Legendre quadrature on (0,1)^d."""
        nodes, weights = leggauss(points)
        nodes = 0.5 * (nodes + 1.0)
        weights = 0.5 * weights
        mesh = np.meshgrid(*([nodes] * dim), indexing="ij")
        w = np.ones_like(mesh[0])
        for axis_weights in np.meshgrid(*([weights] * dim), indexing="ij"):
            w = w * axis_weights
        u = np.asarray(self.value(*mesh), dtype=float) * np.ones_like(w)
        grads = [np.asarray(g, dtype=float) * np.ones_like(w) for g in self.gradient(*mesh)]
        total = np.sum(w * u ** 2) + sum(np.sum(w * g ** 2) for g in grads)
        return float(np.sqrt(total))


def sine_product(frequencies: Sequence[int]) -> SmoothFunction:
    """Π_k sin(f_k π x_k)."""
    freqs = tuple(int(f) for f in frequencies)

    def value(*x):
        out = 1.0
        for f, xk in zip(freqs, x):
            out = out * np.sin(f * np.pi * xk)
        return out

    def gradient(*x):
        grads = []
        for k in range(len(freqs)):
            g = 1.0
            for axis, (f, xa) in enumerate(zip(freqs, x)):
                g = g * (f * np.pi * np.cos(f * np.pi * xa) if axis == k else np.sin(f * np.pi * xa))
            grads.append(g)
        return grads

    return SmoothFunction(name="sin" + "x".join(map(str, freqs)), value=value, gradient=gradient)


def constant(c: float = 1.0, dim: int = 2) -> SmoothFunction:
    return SmoothFunction(name=f"const{c:g}", value=lambda *x: np.full_like(x[0], c, dtype=float),
                          gradient=lambda *x: [np.zeros_like(x[0], dtype=float) for _ in range(dim)])


def sine_family(dim: int, max_frequency: int = 2) -> List[SmoothFunction]:
    grids = np.meshgrid(*([np.arange(1, max_frequency + 1)] * dim), indexing="ij")
    return [sine_product(f) for f in zip(*(g.reshape(-1) for g in grids))]


def y_profiles(dim: int) -> Dict[str, Callable[..., np.ndarray]]:
    """Periodic profiles g(y) used to build two-scale test functions."""
    profiles = {
        "one": lambda *y: np.ones_like(y[0]),
        "sin2pi_y1": lambda *y: np.sin(2 * np.pi * y[0]),
        "cos2pi_y1": lambda *y: np.cos(2 * np.pi * y[0]),
    }
    if dim > 1:
        profiles["cos2pi_y2"] = lambda *y: np.cos(2 * np.pi * y[1])
    return profiles


# --- quantitative estimates ------------------------------------------------------

@dataclass
class UnfoldingRateReport:
    """r_a, r_b, r_c per ε with fitted log-log slopes."""
    epsilons: List[float]
    r_a: List[float]
    r_b: List[float]
    r_c: List[float]
    slopes: Dict[str, SlopeFit]
    family: List[str]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epsilon": self.epsilons, "r_a": self.r_a, "r_b": self.r_b, "r_c": self.r_c})

    def slopes_dict(self) -> Dict[str, Dict]:
        return {name: fit.to_dict() for name, fit in self.slopes.items()}


def _quotients(grid: UnfoldingGrid, family: Sequence[SmoothFunction], norms: Sequence[float],
               profiles: Dict[str, Callable]) -> Tuple[float, float, float]:
    samples = [grid.sample(f.value) for f in family]
    g_values = {name: np.asarray(g(*grid.y_centers()), dtype=float) * np.ones(grid.subcells ** grid.dim)
                for name, g in profiles.items()}
    r_b = r_c = r_a = 0.0
    for u, norm in zip(samples, norms):
        iu = embed(u, grid)
        r_c = max(r_c, (project(iu) - iu).norm() / norm)
        r_b = max(r_b, (unfold(u, grid) - iu).norm() / norm)
        for g in g_values.values():
            phi = TwoScaleGridFunction.from_profile(grid, u, g)
            phi_norm = phi.norm()
            if phi_norm == 0.0:
                continue
            defect = average(phi) - y_mean(phi)
            for v, v_norm in zip(samples, norms):
                r_a = max(r_a, abs(grid.inner(defect, v)) / (phi_norm * v_norm))
    return r_a, r_b, r_c


def estimate_norm_bounds(family: Sequence[SmoothFunction], epsilons: Sequence, subcells: int = 8,
                         dim: int = 2, profiles: Optional[Dict[str, Callable]] = None) -> UnfoldingRateReport:
    """Decay of ‖P_ε - Id‖, ‖T̃_ε - ι‖ and (Ũ_ε - ⟨·⟩_Y) in its dual norm.

    The H⁻¹ norm is approximated from below by duality against the family.
    """
    family = list(family)
    if not family:
        raise ValidationError("norm-bound estimation needs a non-empty test family")
    ns = [lattice_size(e) for e in epsilons]
    if not ns:
        raise ValidationError("empty epsilon list")
    norms = [f.h1_norm(dim) for f in family]
    if any(nv <= 0 for nv in norms):
        raise ValidationError("test functions must have positive H1 norm")
    profiles = profiles or y_profiles(dim)
    rows = []
    for n in ns:
        grid = UnfoldingGrid(dim=dim, n=n, subcells=subcells)
        rows.append(_quotients(grid, family, norms, profiles))
        logger.debug("unfolding quotients n=%d: r_a=%.3e r_b=%.3e r_c=%.3e", n, *rows[-1])
    eps = [1.0 / n for n in ns]
    r_a, r_b, r_c = (list(col) for col in zip(*rows))
    slopes = {"r_a": fit_loglog_slope(eps, r_a), "r_b": fit_loglog_slope(eps, r_b),
              "r_c": fit_loglog_slope(eps, r_c)}
    log_event("UNFOLDING_RATES", {"epsilons": eps, "subcells": subcells,
                                  "slopes": {k: v.slope for k, v in slopes.items()}})
    return UnfoldingRateReport(epsilons=eps, r_a=r_a, r_b=r_b, r_c=r_c, slopes=slopes,
                               family=[f.name for f in family])
