"""
Empirical resolvent gap ‖L⁻¹_{ε,δ} - L̂_δ⁻¹ - δ⁻¹L_{D_ε}⁻¹‖ on a fine grid.

All three solution operators act on the same Q1 space, so their
difference is M-self-adjoint and its L² norm is the largest eigenvalue
magnitude of the pencil (M D, M).
"""

from dataclasses import dataclass
from typing import Optional
import logging

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from core.cell_homogenization import HomogenizedTensor, homogenized_tensor, solve_correctors
from core.coefficients import CoefficientField, ContrastWeight
from core.eigensolve import DEFAULT_SEED
from core.exceptions import EigenSolverError
from core.fem import (assemble_fine_operator, assemble_homogenized_operator,
                      assemble_inclusion_domain_operator)
from core.geometry import PeriodicGeometry, build_epsilon_domain, build_unit_cell_grid
from monitoring.audit import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResolventGap:
    epsilon: float
    delta: float
    norm: float
    dimension: int
    tensor: HomogenizedTensor

    def to_dict(self):
        return {"epsilon": self.epsilon, "delta": self.delta, "norm": self.norm, "dimension": self.dimension}


def resolvent_gap_norm(geom: PeriodicGeometry, A: CoefficientField, delta: float, epsilon,
                       subcells: int, tensor: Optional[HomogenizedTensor] = None,
                       threads: int = 1, seed: int = DEFAULT_SEED) -> ResolventGap:
    lattice, grid = build_epsilon_domain(geom, epsilon, subcells)
    eps = lattice.epsilon
    if tensor is None:
        grid_Y = build_unit_cell_grid(geom, subcells)
        tensor = homogenized_tensor(grid_Y, A, delta, solve_correctors(grid_Y, A, delta, threads=threads))

    fine = assemble_fine_operator(grid, A, ContrastWeight(delta, eps), eps, threads)
    hom = assemble_homogenized_operator(grid, tensor)
    inc = assemble_inclusion_domain_operator(grid, A, eps)
    M = fine.mass.tocsc()
    embed_idx = np.searchsorted(fine.dofs, inc.dofs)

    fine_lu = splu(fine.stiffness.tocsc())
    hom_lu = splu(hom.stiffness.tocsc())
    inc_lu = splu(inc.stiffness.tocsc())
    mass_lu = splu(M)

    def apply(x):
        x = np.ravel(x)
        Mx = M @ x
        out = fine_lu.solve(Mx) - hom_lu.solve(Mx)
        out[embed_idx] -= inc_lu.solve(Mx[embed_idx]) / delta
        return M @ out

    n = fine.dimension
    op = LinearOperator((n, n), matvec=apply, dtype=float)
    minv = LinearOperator((n, n), matvec=lambda x: mass_lu.solve(np.ravel(x)), dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        values = eigsh(op, k=1, M=M, Minv=minv, which="LM", v0=v0, tol=1e-8, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise EigenSolverError(f"resolvent gap estimate failed at epsilon={eps}: {exc}") from exc
    gap = float(np.abs(values).max())
    log_event("RESOLVENT_GAP", {"epsilon": eps, "delta": delta, "norm": gap, "dimension": n})
    return ResolventGap(epsilon=eps, delta=float(delta), norm=gap, dimension=n, tensor=tensor)
