"""
Periodic geometry, epsilon lattice and structured grids.

Unit cell Y = [0,1)^d with an inclusion ω, the lattice of ε-cells covering
Ω = (0,1)^d, and the tensor-product grids every operator is assembled on.
Node and cell numbering is C-order with axis 0 varying slowest.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Callable, Optional, Tuple
import itertools
import logging

import numpy as np

from core.exceptions import GeometryError, GridCompatibilityError

logger = logging.getLogger(__name__)

ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class PeriodicGeometry:
    """Unit cell with a single inclusion.

    The inclusion is an axis-aligned box given by per-axis bounds. When an
    indicator is supplied the box is only the bounding box and cells are
    tagged by sampling the indicator at their barycenters.
    """
    dim: int
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    indicator: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GeometryError(f"dimension {self.dim} not supported (1 or 2)")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise GeometryError("inclusion bounds must have one entry per axis")
        for lo, hi in zip(self.lower, self.upper):
            # closure of ω strictly inside Y
            if not (0.0 < lo < hi < 1.0):
                raise GeometryError(
                    f"inclusion bounds ({lo}, {hi}) must satisfy 0 < lower < upper < 1"
                )

    @classmethod
    def box(cls, lower, upper) -> "PeriodicGeometry":
        lower = tuple(np.atleast_1d(lower))
        return cls(dim=len(lower), lower=lower, upper=tuple(np.atleast_1d(upper)))

    @classmethod
    def centered_square(cls, side: float = 0.5, dim: int = 2) -> "PeriodicGeometry":
        lo = 0.5 - side / 2.0
        return cls(dim=dim, lower=(lo,) * dim, upper=(1.0 - lo,) * dim)

    @classmethod
    def from_indicator(cls, dim: int, indicator, lower, upper) -> "PeriodicGeometry":
        """General inclusion described by an indicator on [0,1)^d.

        lower/upper give a bounding box that must stay away from ∂Y.
        """
        return cls(dim=dim, lower=tuple(lower), upper=tuple(upper), indicator=indicator)

    @property
    def is_box(self) -> bool:
        return self.indicator is None

    @property
    def theta(self) -> float:
        """Volume fraction |ω| of a box inclusion."""
        if not self.is_box:
            raise GeometryError("theta of an indicator inclusion depends on the grid; use sampled_theta")
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def sampled_theta(self, resolution: int) -> float:
        grid = build_unit_cell_grid(self, resolution)
        return grid.tagged_volume

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership test for points of Y (rows of an (N, d) array)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.indicator is not None:
            return np.asarray(self.indicator(points), dtype=bool)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((points > lo) & (points < hi), axis=1)

    def compatible_resolution(self, resolution: int) -> bool:
        if not self.is_box:
            return True
        bounds = np.concatenate([self.lower, self.upper]) * resolution
        return bool(np.all(np.abs(bounds - np.round(bounds)) <= ALIGN_TOL * resolution))

    def smallest_compatible_resolution(self) -> int:
        if not self.is_box:
            return 1
        denominators = [Fraction(b).limit_denominator(10**6).denominator for b in self.lower + self.upper]
        return lcm(*denominators)


@dataclass(frozen=True)
class StructuredGrid:
    """Tensor-product grid on a box [0, length)^d.

    Periodic grids identify opposite faces, so node i on an axis of
    resolution r also stands for node i + r. Dirichlet grids keep all
    r + 1 nodes per axis including the boundary.
    """
    dim: int
    resolution: Tuple[int, ...]
    length: Tuple[float, ...]
    periodic: bool
    cell_tags: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(self, "length", tuple(float(v) for v in self.length))
        if any(r < 1 for r in self.resolution):
            raise GeometryError(f"invalid grid resolution {self.resolution}")
        if self.cell_tags is not None:
            tags = np.asarray(self.cell_tags, dtype=bool).reshape(self.resolution)
            tags.setflags(write=False)
            object.__setattr__(self, "cell_tags", tags)

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.length) / np.asarray(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def nodes_per_axis(self) -> Tuple[int, ...]:
        return self.resolution if self.periodic else tuple(r + 1 for r in self.resolution)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def is_tagged(self) -> bool:
        return self.cell_tags is not None

    @property
    def tagged_volume(self) -> float:
        if self.cell_tags is None:
            return 0.0
        return float(np.count_nonzero(self.cell_tags)) * self.cell_volume

    def tags_flat(self) -> np.ndarray:
        if self.cell_tags is None:
            raise GeometryError("grid carries no region tags")
        return self.cell_tags.reshape(-1)

    def node_coordinates(self) -> np.ndarray:
        axes = [np.arange(n) * hk for n, hk in zip(self.nodes_per_axis, self.h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_centers(self) -> np.ndarray:
        axes = [(np.arange(r) + 0.5) * hk for r, hk in zip(self.resolution, self.h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_nodes(self) -> np.ndarray:
        """Cell-to-node incidence, shape (n_cells, 2^d).

        Local node a = sum_k a_k 2^(d-1-k) sits at offset (a_0, ..., a_{d-1}).
        """
        cell_idx = np.stack(np.meshgrid(*[np.arange(r) for r in self.resolution], indexing="ij"), axis=-1)
        cell_idx = cell_idx.reshape(-1, self.dim)
        npa = np.asarray(self.nodes_per_axis)
        columns = []
        for offset in itertools.product((0, 1), repeat=self.dim):
            idx = cell_idx + np.asarray(offset)
            if self.periodic:
                idx = idx % npa
            columns.append(np.ravel_multi_index(tuple(idx.T), self.nodes_per_axis))
        return np.stack(columns, axis=1)

    def boundary_nodes(self) -> np.ndarray:
        """Boolean mask of nodes on ∂(box); empty for periodic grids."""
        if self.periodic:
            return np.zeros(self.n_nodes, dtype=bool)
        idx = np.indices(self.nodes_per_axis).reshape(self.dim, -1)
        mask = np.zeros(self.n_nodes, dtype=bool)
        for k, r in enumerate(self.resolution):
            mask |= (idx[k] == 0) | (idx[k] == r)
        return mask


@dataclass(frozen=True)
class EpsilonLattice:
    """ε-cells of Ω = (0,1)^d with ε = 1/n."""
    dim: int
    n: int
    inner_cells: np.ndarray = field(compare=False, repr=False)
    covering_cells: np.ndarray = field(compare=False, repr=False)

    @property
    def epsilon(self) -> float:
        return 1.0 / self.n

    @property
    def n_inner(self) -> int:
        return int(self.inner_cells.shape[0])

    @property
    def n_covering(self) -> int:
        return int(self.covering_cells.shape[0])

    def same_cells(self) -> bool:
        a = {tuple(c) for c in self.inner_cells}
        b = {tuple(c) for c in self.covering_cells}
        return a == b


def lattice_size(epsilon) -> int:
    """Return n for ε = 1/n; accepts either n or ε."""
    if isinstance(epsilon, (int, np.integer)) and epsilon >= 1:
        return int(epsilon)
    eps = float(epsilon)
    if not 0.0 < eps < 1.0 and eps != 1.0:
        raise GeometryError(f"epsilon {eps} outside (0, 1]")
    n = int(round(1.0 / eps))
    if abs(1.0 / n - eps) > 1e-12:
        raise GeometryError(f"epsilon {eps} is not of the form 1/n")
    return n


def build_epsilon_lattice(dim: int, epsilon) -> EpsilonLattice:
    """Enumerate inner cells Π_ε and covering cells Π̂_ε of the unit box.

    A cell k is inner when ε(k + Ȳ) lies in Ω̄ and covering when its
    closure meets the open box; both reduce to integer tests.
    """
    n = lattice_size(epsilon)
    candidates = np.array(list(itertools.product(range(-1, n + 1), repeat=dim)), dtype=int)
    inner = np.all((candidates >= 0) & (candidates + 1 <= n), axis=1)
    covering = np.all((candidates < n) & (candidates + 1 > 0), axis=1)
    return EpsilonLattice(
        dim=dim,
        n=n,
        inner_cells=candidates[inner],
        covering_cells=candidates[covering],
    )


def build_unit_cell_grid(geom: PeriodicGeometry, resolution: int) -> StructuredGrid:
    """Periodic grid on Y with exact inclusion tagging."""
    resolution = int(resolution)
    if not geom.compatible_resolution(resolution):
        raise GridCompatibilityError(
            f"resolution {resolution} does not align with inclusion bounds {geom.lower}-{geom.upper}",
            suggested_resolution=geom.smallest_compatible_resolution(),
        )
    grid = StructuredGrid(dim=geom.dim, resolution=(resolution,) * geom.dim,
                          length=(1.0,) * geom.dim, periodic=True)
    tags = geom.contains(grid.cell_centers())
    return StructuredGrid(dim=geom.dim, resolution=grid.resolution, length=grid.length,
                          periodic=True, cell_tags=tags)


def build_epsilon_domain(geom: PeriodicGeometry, epsilon, subcells: int):
    """Lattice and Dirichlet grid on Ω at resolution n·M.

    Fine cell c belongs to ε-cell c // M and sits at sub-index c % M, so
    the inclusion tags are the unit-cell tags tiled over the lattice.
    """
    n = lattice_size(epsilon)
    subcells = int(subcells)
    if not geom.compatible_resolution(subcells):
        raise GridCompatibilityError(
            f"subcells {subcells} do not align with inclusion bounds {geom.lower}-{geom.upper}",
            suggested_resolution=geom.smallest_compatible_resolution(),
        )
    lattice = build_epsilon_lattice(geom.dim, n)
    cell_grid = build_unit_cell_grid(geom, subcells)
    tags = np.tile(cell_grid.cell_tags, (n,) * geom.dim)
    grid = StructuredGrid(dim=geom.dim, resolution=(n * subcells,) * geom.dim,
                          length=(1.0,) * geom.dim, periodic=False, cell_tags=tags)
    logger.debug("epsilon domain n=%d M=%d cells=%d tagged=%.6f",
                 n, subcells, grid.n_cells, grid.tagged_volume)
    return lattice, grid


def epsilon_cell_index(grid: StructuredGrid, n: int) -> np.ndarray:
    """Flat ε-cell index of each fine cell (C-order over the lattice)."""
    res = grid.resolution[0]
    if res % n:
        raise GridCompatibilityError(f"grid resolution {res} does not resolve {n} epsilon cells")
    sub = res // n
    idx = np.indices(grid.resolution).reshape(grid.dim, -1) // sub
    return np.ravel_multi_index(tuple(idx), (n,) * grid.dim)
