"""
Q1 finite element assembly on structured grids.

Coefficients are piecewise constant per cell (sampled at barycenters), so
every element integral below is exact. Degrees of freedom are numbered
node-major: dof = node * m + component.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union
import itertools
import logging

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from core.coefficients import CoefficientField, ContrastWeight, contrast_weight_values
from core.exceptions import (AssemblyError, GeometryError, GridCompatibilityError,
                             SolverConvergenceError, ValidationError)
from core.geometry import StructuredGrid
from monitoring.alerts import get_alert_manager
from monitoring.audit import log_event

logger = logging.getLogger(__name__)

CHUNK_CELLS = 4096


class Constraint(str, Enum):
    DIRICHLET = "dirichlet"
    PERIODIC_MEAN_ZERO = "periodic-mean-zero"
    PERIODIC = "periodic"


# --- reference element integrals -------------------------------------------

def _stiffness_1d(h: float) -> np.ndarray:
    return np.array([[1.0, -1.0], [-1.0, 1.0]]) / h


def _mass_1d(h: float) -> np.ndarray:
    return np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0


# ∫ φ'_a φ_b over one interval
_MIXED_1D = np.array([[-0.5, -0.5], [0.5, 0.5]])


def gradient_integrals(h) -> np.ndarray:
    """G[i, j, p, q] = ∫_cell ∂_i φ_p ∂_j φ_q for the Q1 basis."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    d = h.size
    nloc = 2 ** d
    G = np.empty((d, d, nloc, nloc))
    for i, j in itertools.product(range(d), repeat=2):
        block = np.ones((1, 1))
        for k in range(d):
            if k == i and k == j:
                factor = _stiffness_1d(h[k])
            elif k == i:
                factor = _MIXED_1D
            elif k == j:
                factor = _MIXED_1D.T
            else:
                factor = _mass_1d(h[k])
            block = np.kron(block, factor)
        G[i, j] = block
    return G


def mass_integrals(h) -> np.ndarray:
    """∫_cell φ_p φ_q."""
    block = np.ones((1, 1))
    for hk in np.atleast_1d(h):
        block = np.kron(block, _mass_1d(hk))
    return block


def basis_integrals(h) -> np.ndarray:
    """∫_cell φ_p."""
    vec = np.ones(1)
    for hk in np.atleast_1d(h):
        vec = np.kron(vec, np.full(2, hk / 2.0))
    return vec


def basis_gradient_integrals(h) -> np.ndarray:
    """g[k, p] = ∫_cell ∂_k φ_p."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    d = h.size
    g = np.empty((d, 2 ** d))
    for k in range(d):
        vec = np.ones(1)
        for axis in range(d):
            vec = np.kron(vec, np.array([-1.0, 1.0]) if axis == k else np.full(2, h[axis] / 2.0))
        g[k] = vec
    return g


# --- assembly ----------------------------------------------------------------

def _chunks(n: int, size: int = CHUNK_CELLS) -> List[slice]:
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def _local_dofs(cell_nodes: np.ndarray, m: int) -> np.ndarray:
    """(cells, 2^d) node incidence -> (cells, 2^d * m) dof incidence."""
    return (cell_nodes[:, :, None] * m + np.arange(m)[None, None, :]).reshape(cell_nodes.shape[0], -1)


def assemble_stiffness(grid: StructuredGrid, cell_coeff: np.ndarray,
                       cell_weight: Optional[np.ndarray] = None, threads: int = 1) -> sp.csr_matrix:
    """Global stiffness over all grid nodes, K = Σ_c w_c Σ_ij A_c[i,j] ⊗ G_ij.

    cell_coeff has shape (n_cells, d, d, m, m). Chunks of cells are
    assembled concurrently and concatenated in chunk order.
    """
    n_cells = grid.n_cells
    if cell_coeff.shape[0] != n_cells:
        raise AssemblyError(f"{cell_coeff.shape[0]} coefficient samples for {n_cells} cells")
    m = cell_coeff.shape[-1]
    weight = np.ones(n_cells) if cell_weight is None else np.asarray(cell_weight, dtype=float)
    G = gradient_integrals(grid.h)
    dofs = _local_dofs(grid.cell_nodes(), m)
    nloc = dofs.shape[1]

    def chunk_triplets(sl: slice):
        Ke = np.einsum("c,cijab,ijpq->cpaqb", weight[sl], cell_coeff[sl], G)
        Ke = Ke.reshape(-1, nloc, nloc)
        rows = np.repeat(dofs[sl], nloc, axis=1).reshape(-1)
        cols = np.tile(dofs[sl], (1, nloc)).reshape(-1)
        return rows, cols, Ke.reshape(-1)

    parts = _run_ordered(chunk_triplets, _chunks(n_cells), threads)
    rows, cols, vals = (np.concatenate(p) for p in zip(*parts))
    size = grid.n_nodes * m
    return sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


def assemble_mass(grid: StructuredGrid, m: int = 1, cell_mask: Optional[np.ndarray] = None) -> sp.csr_matrix:
    Me = np.kron(mass_integrals(grid.h), np.eye(m))
    dofs = _local_dofs(grid.cell_nodes(), m)
    if cell_mask is not None:
        dofs = dofs[np.asarray(cell_mask, dtype=bool)]
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, nloc)).reshape(-1)
    vals = np.tile(Me.reshape(-1), dofs.shape[0])
    size = grid.n_nodes * m
    return sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()


def node_integrals(grid: StructuredGrid, cell_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """∫ φ_p for every node p (restricted to masked cells if given)."""
    nodes = grid.cell_nodes()
    if cell_mask is not None:
        nodes = nodes[np.asarray(cell_mask, dtype=bool)]
    out = np.zeros(grid.n_nodes)
    np.add.at(out, nodes.reshape(-1), np.tile(basis_integrals(grid.h), nodes.shape[0]))
    return out


def _run_ordered(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- operators ----------------------------------------------------------------

@dataclass(frozen=True)
class SparseSymmetricOperator:
    """Stiffness/mass pair restricted to free degrees of freedom."""
    stiffness: sp.csr_matrix = field(repr=False)
    mass: sp.csr_matrix = field(repr=False)
    constraint: Constraint
    dof_map: np.ndarray = field(repr=False)  # free grid nodes, ascending
    m: int = 1
    grid: Optional[StructuredGrid] = field(default=None, repr=False)
    label: str = ""

    @classmethod
    def from_matrices(cls, K, M, constraint: Constraint = Constraint.DIRICHLET,
                      label: str = "pencil") -> "SparseSymmetricOperator":
        K = sp.csr_matrix(K)
        M = sp.csr_matrix(M)
        if K.shape != M.shape or K.shape[0] != K.shape[1]:
            raise ValidationError(f"incompatible pencil shapes {K.shape} and {M.shape}")
        return cls(stiffness=K, mass=M, constraint=Constraint(constraint),
                   dof_map=np.arange(K.shape[0]), m=1, label=label)

    @property
    def dimension(self) -> int:
        return self.stiffness.shape[0]

    @property
    def dofs(self) -> np.ndarray:
        return (self.dof_map[:, None] * self.m + np.arange(self.m)[None, :]).reshape(-1)

    def symmetry_defect(self) -> float:
        scale = max(abs(self.stiffness).max(), np.finfo(float).tiny)
        return float(abs(self.stiffness - self.stiffness.T).max() / scale)

    def extend(self, u: np.ndarray) -> np.ndarray:
        """Dof vector(s) -> values on every grid node, shape (n_nodes, m[, k])."""
        if self.grid is None:
            raise GeometryError("operator has no grid to extend onto")
        u = np.asarray(u)
        full = np.zeros((self.grid.n_nodes * self.m,) + u.shape[1:], dtype=u.dtype)
        full[self.dofs] = u
        return full.reshape((self.grid.n_nodes, self.m) + u.shape[1:])

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Nodal values of shape (n_nodes, m) or (n_nodes * m,) -> dof vector."""
        values = np.asarray(values)
        return values.reshape(-1)[self.dofs]

    def integral_weights(self) -> np.ndarray:
        """W with W[:, α]·u = ∫ u^α over the whole grid, shape (dimension, m)."""
        if self.grid is None:
            ones = self.mass @ np.ones(self.dimension)
            return ones[:, None]
        per_node = node_integrals(self.grid)[self.dof_map]
        W = np.zeros((self.dimension, self.m))
        for a in range(self.m):
            W[a::self.m, a] = per_node
        return W

    def to_matrix_market(self, directory: Union[str, Path], stem: Optional[str] = None) -> Tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or (self.label or "operator")
        k_path = directory / f"{stem}_K.mtx"
        m_path = directory / f"{stem}_M.mtx"
        comment = f"homoglab {self.label} constraint={self.constraint.value}"
        scipy.io.mmwrite(str(k_path), self.stiffness, comment=comment, symmetry="symmetric")
        scipy.io.mmwrite(str(m_path), self.mass, comment=comment, symmetry="symmetric")
        return k_path, m_path


def _restrict(matrix: sp.csr_matrix, dofs: np.ndarray) -> sp.csr_matrix:
    return matrix[dofs][:, dofs].tocsr()


def _make_operator(grid, K_full, M_full, free_nodes, m, constraint, label) -> SparseSymmetricOperator:
    dofs = (free_nodes[:, None] * m + np.arange(m)[None, :]).reshape(-1)
    op = SparseSymmetricOperator(
        stiffness=_restrict(K_full, dofs), mass=_restrict(M_full, dofs),
        constraint=constraint, dof_map=free_nodes, m=m, grid=grid, label=label,
    )
    log_event("ASSEMBLY", {"operator": label, "constraint": constraint.value,
                           "dimension": op.dimension, "nnz": int(op.stiffness.nnz)})
    return op


def _fine_coefficients(grid: StructuredGrid, A: CoefficientField, epsilon: float) -> np.ndarray:
    n = int(round(1.0 / epsilon))
    if grid.resolution[0] % n:
        raise GridCompatibilityError(
            f"grid resolution {grid.resolution[0]} does not resolve epsilon cells of size 1/{n}")
    return A.sample_cells(grid, period=epsilon)


def assemble_stiffness_parts(grid: StructuredGrid, A: CoefficientField, epsilon: float,
                             threads: int = 1) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Matrix and inclusion contributions on interior dofs: K = K_matrix + δ·K_inclusion."""
    if not grid.is_tagged:
        raise GeometryError("fine grid must carry inclusion tags")
    coeff = _fine_coefficients(grid, A, epsilon)
    tags = grid.tags_flat()
    free = np.flatnonzero(~grid.boundary_nodes())
    dofs = (free[:, None] * A.m + np.arange(A.m)[None, :]).reshape(-1)
    K_matrix = assemble_stiffness(grid, coeff, (~tags).astype(float), threads)
    K_inclusion = assemble_stiffness(grid, coeff, tags.astype(float), threads)
    return _restrict(K_matrix, dofs), _restrict(K_inclusion, dofs)


def assemble_fine_operator(grid: StructuredGrid, A: CoefficientField, w: ContrastWeight,
                           epsilon: float, threads: int = 1) -> SparseSymmetricOperator:
    """Discrete L_{ε,δ} = -div(Λ A(x/ε) ∇) with zero Dirichlet data on ∂Ω."""
    coeff = _fine_coefficients(grid, A, epsilon)
    weights = contrast_weight_values(w, grid)
    K = assemble_stiffness(grid, coeff, weights, threads)
    M = assemble_mass(grid, A.m)
    free = np.flatnonzero(~grid.boundary_nodes())
    return _make_operator(grid, K, M, free, A.m, Constraint.DIRICHLET,
                          f"fine(eps={epsilon:.6g},delta={w.delta:.6g})")


def assemble_cell_operator(grid_Y: StructuredGrid, A: CoefficientField, delta: float,
                           threads: int = 1) -> SparseSymmetricOperator:
    """Periodic L_{1,δ} on Y; the constant mode is deflated at solve time."""
    if not grid_Y.periodic:
        raise GeometryError("cell operator needs a periodic grid")
    weights = contrast_weight_values(ContrastWeight(delta), grid_Y)
    K = assemble_stiffness(grid_Y, A.sample_cells(grid_Y), weights, threads)
    M = assemble_mass(grid_Y, A.m)
    return _make_operator(grid_Y, K, M, np.arange(grid_Y.n_nodes), A.m,
                          Constraint.PERIODIC_MEAN_ZERO, f"cell(delta={delta:.6g})")


def inclusion_interior_nodes(grid: StructuredGrid) -> np.ndarray:
    """Nodes whose every adjacent cell is an inclusion cell."""
    tags = grid.tags_flat()
    touched = np.zeros(grid.n_nodes, dtype=bool)
    touched[grid.cell_nodes()[~tags].reshape(-1)] = True
    touched |= grid.boundary_nodes()
    return np.flatnonzero(~touched)


def assemble_inclusion_operator(grid_Y: StructuredGrid, A: CoefficientField) -> SparseSymmetricOperator:
    """Dirichlet L_{1,1} on ω, dofs at interior inclusion nodes."""
    if not grid_Y.is_tagged:
        raise GeometryError("inclusion operator needs a tagged grid")
    free = inclusion_interior_nodes(grid_Y)
    if free.size == 0:
        raise GridCompatibilityError(
            f"resolution {grid_Y.resolution} leaves no interior node inside the inclusion")
    tags = grid_Y.tags_flat()
    K = assemble_stiffness(grid_Y, A.sample_cells(grid_Y), tags.astype(float))
    M = assemble_mass(grid_Y, A.m, cell_mask=tags)
    return _make_operator(grid_Y, K, M, free, A.m, Constraint.DIRICHLET, "inclusion")


def assemble_inclusion_domain_operator(grid: StructuredGrid, A: CoefficientField,
                                       epsilon: float) -> SparseSymmetricOperator:
    """Dirichlet -div(A(x/ε)∇) on the union of inclusion copies D_ε."""
    coeff = _fine_coefficients(grid, A, epsilon)
    free = inclusion_interior_nodes(grid)
    if free.size == 0:
        raise GridCompatibilityError("no interior nodes inside the inclusion copies")
    tags = grid.tags_flat()
    K = assemble_stiffness(grid, coeff, tags.astype(float))
    M = assemble_mass(grid, A.m, cell_mask=tags)
    return _make_operator(grid, K, M, free, A.m, Constraint.DIRICHLET,
                          f"inclusions(eps={epsilon:.6g})")


def tensor_as_array(A_hat, dim: int) -> np.ndarray:
    """Accept (dm, dm) matrices or (d, d, m, m) arrays; return the latter."""
    arr = np.asarray(getattr(A_hat, "entries", A_hat), dtype=float)
    if arr.ndim == 4:
        return arr
    dm = arr.shape[0]
    m = dm // dim
    if arr.shape != (dm, dm) or m * dim != dm:
        raise ValidationError(f"tensor of shape {arr.shape} incompatible with dimension {dim}")
    return arr.reshape(dim, m, dim, m).transpose(0, 2, 1, 3)


def assemble_homogenized_operator(grid_Omega: StructuredGrid, A_hat) -> SparseSymmetricOperator:
    """Constant-coefficient Dirichlet operator -div(Â∇) on Ω."""
    tensor = tensor_as_array(A_hat, grid_Omega.dim)
    d, _, m, _ = tensor.shape
    mat = tensor.transpose(0, 2, 1, 3).reshape(d * m, d * m)
    if np.abs(mat - mat.T).max() > 1e-8 * max(np.abs(mat).max(), 1.0):
        raise ValidationError("homogenized tensor is not symmetric")
    smallest = float(np.linalg.eigvalsh(0.5 * (mat + mat.T)).min())
    if smallest <= 0:
        raise ValidationError(f"homogenized tensor not positive definite (smallest eigenvalue {smallest:.6g})")
    coeff = np.broadcast_to(tensor, (grid_Omega.n_cells,) + tensor.shape)
    K = assemble_stiffness(grid_Omega, np.ascontiguousarray(coeff))
    M = assemble_mass(grid_Omega, m)
    free = np.flatnonzero(~grid_Omega.boundary_nodes())
    return _make_operator(grid_Omega, K, M, free, m, Constraint.DIRICHLET, "homogenized")


# --- linear solves -------------------------------------------------------------

@dataclass
class SolveResult:
    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool
    method: str


def _deflated(op: SparseSymmetricOperator):
    """K + c·W Wᵀ, which is SPD on periodic grids and keeps mean-zero solutions."""
    W = op.integral_weights()
    diag = op.stiffness.diagonal()
    c = float(diag.max()) / float((W ** 2).sum(axis=0).max())
    K = op.stiffness
    matvec = lambda x: K @ x + c * (W @ (W.T @ x))
    A = LinearOperator(K.shape, matvec=matvec, dtype=float)
    precond_diag = diag + c * (W ** 2).sum(axis=1)
    return A, precond_diag, W


def solve(op: SparseSymmetricOperator, rhs: np.ndarray, method: str = "cg",
          rtol: float = 1e-12, maxiter: Optional[int] = None) -> SolveResult:
    """Solve K u = rhs under the operator's constraint.

    Periodic-mean-zero operators return the solution with ∫u^α = 0.
    """
    rhs = np.asarray(rhs, dtype=float)
    norm_b = float(np.linalg.norm(rhs))
    if norm_b == 0.0:
        return SolveResult(np.zeros_like(rhs), 0, 0.0, True, method)
    mean_zero = op.constraint is Constraint.PERIODIC_MEAN_ZERO

    info = 0
    if method == "direct":
        if mean_zero:
            W = op.integral_weights()
            bordered = sp.bmat([[op.stiffness, sp.csr_matrix(W)], [sp.csr_matrix(W.T), None]], format="csc")
            sol = splu(bordered).solve(np.concatenate([rhs, np.zeros(W.shape[1])]))[:op.dimension]
        else:
            sol = splu(op.stiffness.tocsc()).solve(rhs)
        iterations = 1
    elif method == "cg":
        if mean_zero:
            A, diag, W = _deflated(op)
        else:
            A, diag = op.stiffness, op.stiffness.diagonal()
        precond = LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)
        counter = {"n": 0}

        def count(_):
            counter["n"] += 1

        sol, info = cg(A, rhs, rtol=rtol, atol=0.0, maxiter=maxiter or 20 * op.dimension,
                       M=precond, callback=count)
        iterations = counter["n"]
        if info < 0:
            raise SolverConvergenceError(f"CG breakdown on {op.label} (info={info})")
    else:
        raise ValidationError(f"unknown linear solver '{method}' (cg or direct)")

    if mean_zero:
        W = op.integral_weights()
        volume = W.sum(axis=0)
        for a in range(op.m):
            sol[a::op.m] -= (W[:, a] @ sol) / volume[a]
    residual = float(np.linalg.norm(rhs - op.stiffness @ sol)) / norm_b
    converged = info == 0
    if not converged:
        get_alert_manager().send_numerical_alert(
            "CG_NOT_CONVERGED",
            {"operator": op.label, "iterations": iterations, "residual": residual, "rtol": rtol},
        )
    return SolveResult(sol, iterations, residual, converged, method)


class FactorizedSolver:
    """Sparse LU of a Dirichlet stiffness for repeated solves."""

    def __init__(self, op: SparseSymmetricOperator):
        if op.constraint is not Constraint.DIRICHLET:
            raise ValidationError("factorized solves need a Dirichlet operator")
        self.op = op
        self._lu = splu(op.stiffness.tocsc())

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(rhs, dtype=float))
