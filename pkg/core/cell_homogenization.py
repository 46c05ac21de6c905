"""
Cell problems and homogenized tensors.

For each direction i and component α the corrector χ_i^α is the periodic,
mean-zero solution of ∫_Y Λ_δ A ∇χ·∇v = -∫_Y Λ_δ A e_i^α·∇v, and
Â_δ[i,j,α,β] = ∫_Y Λ_δ (a_ij^αβ + a_ik^αγ ∂_k χ_j^γβ).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import itertools
import logging

import numpy as np

from core.coefficients import CoefficientField, ContrastWeight, contrast_weight_values
from core.exceptions import ValidationError
from core.fem import (SparseSymmetricOperator, assemble_cell_operator, basis_gradient_integrals,
                      gradient_integrals, node_integrals, solve)
from core.geometry import StructuredGrid
from monitoring.alerts import get_alert_manager
from monitoring.audit import log_event

logger = logging.getLogger(__name__)


@dataclass
class CorrectorSet:
    """Periodic mean-zero correctors on a unit-cell grid."""
    chi: np.ndarray  # (d, m, n_nodes, m): chi[i, α][:, γ] is component γ of χ_i^α
    delta: float
    resolution: Tuple[int, ...]
    residuals: np.ndarray  # (d, m)
    iterations: np.ndarray  # (d, m)
    converged: bool
    method: str = "cg"

    @property
    def dim(self) -> int:
        return self.chi.shape[0]

    @property
    def m(self) -> int:
        return self.chi.shape[1]

    def means(self, grid: StructuredGrid) -> np.ndarray:
        """∫_Y χ_i^α per component, shape (d, m, m)."""
        w = node_integrals(grid)
        return np.einsum("p,iapg->iag", w, self.chi)


@dataclass
class HomogenizedTensor:
    """Â_δ as a dm×dm matrix with row index i·m + α."""
    entries: np.ndarray
    delta: float
    dim: int
    m: int
    resolution: Tuple[int, ...] = ()
    residuals: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ellipticity_check(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.T)).min())

    @property
    def symmetry_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.T).max())

    def as_array(self) -> np.ndarray:
        """(d, d, m, m) view: a[i, j, α, β]."""
        d, m = self.dim, self.m
        return self.entries.reshape(d, m, d, m).transpose(0, 2, 1, 3)

    def entry(self, i: int, j: int, alpha: int = 0, beta: int = 0) -> float:
        return float(self.entries[i * self.m + alpha, j * self.m + beta])

    def to_dict(self) -> Dict:
        arr = self.as_array()
        entries = {
            f"{i + 1},{j + 1},{a + 1},{b + 1}": float(arr[i, j, a, b])
            for i, j, a, b in itertools.product(range(self.dim), range(self.dim), range(self.m), range(self.m))
        }
        return {
            "entries": entries,
            "delta": self.delta,
            "resolution": list(self.resolution),
            "ellipticity_check": self.ellipticity_check,
            "residuals": None if self.residuals is None else self.residuals.tolist(),
        }


def _cell_data(grid_Y: StructuredGrid, A: CoefficientField, delta: float):
    coeff = A.sample_cells(grid_Y)
    weight = contrast_weight_values(ContrastWeight(delta), grid_Y)
    return coeff, weight


def corrector_rhs(grid_Y: StructuredGrid, A: CoefficientField, delta: float) -> np.ndarray:
    """b[i, α] = -∫ Λ A e_i^α · ∇φ for every dof, shape (d, m, n_nodes * m)."""
    coeff, weight = _cell_data(grid_Y, A, delta)
    d, m = A.dim, A.m
    g = basis_gradient_integrals(grid_Y.h)
    nodes = grid_Y.cell_nodes()
    # local[c, i, α, p, γ] = -Λ_c Σ_k A_c[k, i, γ, α] g[k, p]
    local = -np.einsum("c,ckiga,kp->ciapg", weight, coeff, g)
    dofs = (nodes[:, :, None] * m + np.arange(m)[None, None, :]).reshape(nodes.shape[0], -1)
    rhs = np.zeros((d, m, grid_Y.n_nodes * m))
    for i, a in itertools.product(range(d), range(m)):
        np.add.at(rhs[i, a], dofs.reshape(-1), local[:, i, a].reshape(-1))
    return rhs


def solve_correctors(grid_Y: StructuredGrid, A: CoefficientField, delta: float,
                     method: str = "cg", rtol: float = 1e-12, threads: int = 1,
                     operator: Optional[SparseSymmetricOperator] = None) -> CorrectorSet:
    """Solve the d·m cell problems (concurrently when threads > 1)."""
    if not grid_Y.periodic:
        raise ValidationError("correctors need a periodic unit-cell grid")
    if delta <= 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    op = operator or assemble_cell_operator(grid_Y, A, delta, threads)
    rhs = corrector_rhs(grid_Y, A, delta)
    d, m = A.dim, A.m
    keys = list(itertools.product(range(d), range(m)))

    def run(key):
        return solve(op, rhs[key], method=method, rtol=rtol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, keys))
    else:
        results = [run(key) for key in keys]

    chi = np.zeros((d, m, grid_Y.n_nodes, m))
    residuals = np.zeros((d, m))
    iterations = np.zeros((d, m), dtype=int)
    for (i, a), res in zip(keys, results):
        chi[i, a] = res.solution.reshape(grid_Y.n_nodes, m)
        residuals[i, a] = res.residual
        iterations[i, a] = res.iterations
    converged = all(r.converged for r in results)
    log_event("CORRECTORS", {"delta": delta, "resolution": list(grid_Y.resolution), "method": method,
                             "iterations": iterations.tolist(), "max_residual": float(residuals.max()),
                             "converged": converged})
    if not converged:
        get_alert_manager().send_numerical_alert(
            "CORRECTOR_NOT_CONVERGED",
            {"delta": delta, "iterations": iterations.tolist(), "residuals": residuals.tolist()},
        )
    return CorrectorSet(chi=chi, delta=float(delta), resolution=grid_Y.resolution,
                        residuals=residuals, iterations=iterations, converged=converged, method=method)


def _check_inputs(grid_Y: StructuredGrid, A: CoefficientField, delta: float, chi: CorrectorSet):
    if tuple(chi.resolution) != tuple(grid_Y.resolution):
        raise ValidationError(f"correctors computed at resolution {chi.resolution}, grid is {grid_Y.resolution}")
    if abs(chi.delta - delta) > 1e-14 * max(abs(delta), 1.0):
        raise ValidationError(f"correctors computed at delta={chi.delta}, requested delta={delta}")
    if chi.dim != A.dim or chi.m != A.m:
        raise ValidationError("corrector shape does not match the coefficient field")


def _gradient_cell_integrals(grid_Y: StructuredGrid, chi: CorrectorSet) -> np.ndarray:
    """∫_c ∂_k χ_j^{γβ}, shape (d_j, m_β, cells, d_k, m_γ)."""
    g = basis_gradient_integrals(grid_Y.h)
    values = chi.chi[:, :, grid_Y.cell_nodes(), :]  # (d, m, c, P, m)
    return np.einsum("jbcpg,kp->jbckg", values, g)


def homogenized_tensor(grid_Y: StructuredGrid, A: CoefficientField, delta: float,
                       chi: CorrectorSet) -> HomogenizedTensor:
    """Flux form of Â_δ by exact per-cell quadrature."""
    _check_inputs(grid_Y, A, delta, chi)
    coeff, weight = _cell_data(grid_Y, A, delta)
    grads = _gradient_cell_integrals(grid_Y, chi)
    tensor = grid_Y.cell_volume * np.einsum("c,cijab->ijab", weight, coeff)
    tensor += np.einsum("c,cikag,jbckg->ijab", weight, coeff, grads)
    d, m = A.dim, A.m
    entries = tensor.transpose(0, 2, 1, 3).reshape(d * m, d * m)
    result = HomogenizedTensor(entries=entries, delta=float(delta), dim=d, m=m,
                               resolution=grid_Y.resolution, residuals=chi.residuals)
    if result.ellipticity_check <= 0:
        get_alert_manager().send_numerical_alert(
            "TENSOR_NOT_ELLIPTIC", {"delta": delta, "smallest_eigenvalue": result.ellipticity_check})
    return result


def energy_form_tensor(grid_Y: StructuredGrid, A: CoefficientField, delta: float,
                       chi: CorrectorSet) -> np.ndarray:
    """∫ Λ A (e_j^β + ∇χ_j^β)·(e_i^α + ∇χ_i^α) as a dm×dm matrix.

    Assembled cell by cell from the corrector gradients, independently of
    the flux form. The two agree when the correctors solve the cell
    problems; otherwise the energy form exceeds Â_δ by a PSD error that
    is quadratic in the corrector error.
    """
    _check_inputs(grid_Y, A, delta, chi)
    coeff, weight = _cell_data(grid_Y, A, delta)
    grads = _gradient_cell_integrals(grid_Y, chi)
    values = chi.chi[:, :, grid_Y.cell_nodes(), :]  # (d, m, c, P, m)
    local = gradient_integrals(grid_Y.h)            # ∫_cell ∂_k φ_p ∂_l φ_q
    tensor = grid_Y.cell_volume * np.einsum("c,cijab->ijab", weight, coeff)
    tensor += np.einsum("c,cikag,jbckg->ijab", weight, coeff, grads)
    tensor += np.einsum("c,ckjgb,iackg->ijab", weight, coeff, grads)
    tensor += np.einsum("c,cklgh,iacpg,klpq,jbcqh->ijab", weight, coeff, values, local, values, optimize=True)
    d, m = A.dim, A.m
    return tensor.transpose(0, 2, 1, 3).reshape(d * m, d * m)


def tensor_delta_sweep(grid_Y: StructuredGrid, A: CoefficientField, deltas: Sequence[float],
                       method: str = "cg", rtol: float = 1e-12, threads: int = 1) -> List[HomogenizedTensor]:
    """Â_δ for each δ (ascending); monotonicity of â_11 is logged."""
    deltas = [float(x) for x in deltas]
    if not deltas:
        raise ValidationError("empty delta list")
    if any(x <= 0 for x in deltas):
        raise ValidationError("deltas must be positive")
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise ValidationError("deltas must be sorted ascending")
    tensors = []
    for delta in deltas:
        chi = solve_correctors(grid_Y, A, delta, method=method, rtol=rtol, threads=threads)
        tensors.append(homogenized_tensor(grid_Y, A, delta, chi))
    monotone = a11_monotone(tensors)
    log_event("DELTA_SWEEP", {"deltas": deltas, "a11": [t.entry(0, 0) for t in tensors],
                              "monotone": monotone})
    if not monotone:
        get_alert_manager().send_numerical_alert("A11_NOT_MONOTONE", {"deltas": deltas})
    return tensors


def a11_monotone(tensors: Sequence[HomogenizedTensor], rtol: float = 1e-10) -> bool:
    """â_11 nondecreasing along the sweep (up to rtol)."""
    values = [t.entry(0, 0) for t in tensors]
    return all(b >= a - rtol * abs(a) for a, b in zip(values, values[1:]))


def perforated_tensor(grid_Y: StructuredGrid, A: CoefficientField, delta: float = 1e-6,
                      check_delta: float = 1e-8) -> Tuple[HomogenizedTensor, float]:
    """Approximate Â_0 by a small δ; return it with the gap to a smaller δ."""
    tensors = []
    for value in (check_delta, delta):
        chi = solve_correctors(grid_Y, A, value, method="direct")
        tensors.append(homogenized_tensor(grid_Y, A, value, chi))
    gap = float(np.abs(tensors[1].entries - tensors[0].entries).max())
    log_event("PERFORATED_TENSOR", {"delta": delta, "check_delta": check_delta, "gap": gap})
    return tensors[1], gap
