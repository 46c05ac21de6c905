"""
Dirichlet spectrum of the inclusion and its mean-zero / nonzero-mean split.

Eigenfunctions ψ_i are extended by zero to Y and normalized in L²(Y).
Inside a degenerate cluster the basis is rotated so that a single vector
carries the whole mean; the rest are mean-zero.
"""

from dataclasses import dataclass, field
from typing import List, Optional
import logging

import numpy as np
import pandas as pd
import scipy.linalg

from core.coefficients import CoefficientField
from core.eigensolve import (DEFAULT_SEED, EigenRequest, cluster_values, dense_oracle_eigens,
                             smallest_eigenpairs, CLUSTER_GAP)
from core.exceptions import SpectrumError, ValidationError
from core.fem import SparseSymmetricOperator, assemble_inclusion_operator, node_integrals
from core.geometry import EpsilonLattice, StructuredGrid
from monitoring.alerts import get_alert_manager
from monitoring.audit import log_event

logger = logging.getLogger(__name__)

MEAN_TOL = 1e-8
DEFAULT_MODES = 60
MEAN_ZERO = "mean-zero"
NONZERO_MEAN = "nonzero-mean"


@dataclass
class InclusionSpectrum:
    mu: np.ndarray             # ascending
    psi_means: np.ndarray      # ∫_Y ψ_i
    branch: np.ndarray         # MEAN_ZERO / NONZERO_MEAN
    theta: float
    vectors: np.ndarray = field(repr=False)  # dof values, M-orthonormal
    node_vectors: np.ndarray = field(repr=False)  # values on every Y-grid node
    complete: bool = False
    resolution: tuple = ()
    residuals: Optional[np.ndarray] = field(default=None, repr=False)
    converged: bool = True

    @property
    def count(self) -> int:
        return int(self.mu.size)

    @property
    def inv(self) -> np.ndarray:
        return 1.0 / self.mu

    @property
    def nonzero_mask(self) -> np.ndarray:
        return self.branch == NONZERO_MEAN

    @property
    def weights(self) -> np.ndarray:
        """c_i = (∫ψ_i)² on the nonzero-mean branch, 0 elsewhere."""
        return np.where(self.nonzero_mask, self.psi_means ** 2, 0.0)

    @property
    def beta(self) -> np.ndarray:
        return self.inv[self.nonzero_mask]

    @property
    def c(self) -> np.ndarray:
        return self.weights[self.nonzero_mask]

    @property
    def alpha(self) -> np.ndarray:
        return self.inv[~self.nonzero_mask]

    @property
    def parseval_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def tail_mass(self) -> float:
        """θ - Σ c_i, the mass not resolved by the computed modes."""
        return max(self.theta - self.parseval_mass, 0.0)

    def scaled_inv_bound(self) -> float:
        """Largest inverse eigenvalue any uncomputed mode can have."""
        return float(self.inv[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "index": np.arange(1, self.count + 1),
            "mu": self.mu,
            "inv": self.inv,
            "mean": self.psi_means,
            "branch": self.branch,
            "c": self.weights,
        })


def _adapt_clusters(values: np.ndarray, vectors: np.ndarray, weights: np.ndarray,
                    mean_tol: float, rel_gap: float) -> np.ndarray:
    """Rotate degenerate clusters so the mean functional is diagonal."""
    vectors = vectors.copy()
    for cl in cluster_values(values, rel_gap):
        if cl.size == 1:
            continue
        sl = slice(cl.start, cl.start + cl.size)
        g = vectors[:, sl].T @ weights
        norm = float(np.linalg.norm(g))
        if norm <= mean_tol:
            continue
        q = g / norm
        Q = np.column_stack([q, scipy.linalg.null_space(q[None, :])])
        vectors[:, sl] = vectors[:, sl] @ Q
    return vectors


def _orient(vectors: np.ndarray, means: np.ndarray, mean_zero: np.ndarray) -> np.ndarray:
    signs = np.sign(means)
    idx = np.argmax(np.abs(vectors), axis=0)
    fallback = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs = np.where(mean_zero | (signs == 0), fallback, signs)
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def _cluster_cut(values: np.ndarray, count: int, rel_gap: float) -> int:
    """Largest n ≤ count such that values[:n] ends on a cluster boundary."""
    cut = 0
    for cl in cluster_values(values, rel_gap):
        end = cl.start + cl.size
        if end <= count:
            cut = end
    return cut


def compute_inclusion_spectrum(grid_Y: StructuredGrid, A: CoefficientField,
                               count: Optional[int] = DEFAULT_MODES, tolerance: float = 1e-10,
                               mean_tol: float = MEAN_TOL, seed: int = DEFAULT_SEED,
                               rel_gap: float = CLUSTER_GAP) -> InclusionSpectrum:
    """Eigenpairs of the inclusion operator with branch labels.

    count=None (or count ≥ number of interior dofs) computes the complete
    discrete spectrum.
    """
    if A.m != 1:
        raise ValidationError("inclusion spectra are implemented for scalar fields (m = 1)")
    op = assemble_inclusion_operator(grid_Y, A)
    dim = op.dimension
    complete = count is None or count >= dim
    if not complete and count < 4:
        raise ValidationError(f"inclusion mode count must be >= 4, got {count}")

    if complete or count + 2 > dim / 4:
        result = dense_oracle_eigens(op)
    else:
        result = smallest_eigenpairs(EigenRequest(op, count + 2, tolerance=tolerance, seed=seed))
    values, vectors = result.values, result.vectors
    if not complete:
        cut = _cluster_cut(values, count, rel_gap)
        if cut < count:
            logger.info("inclusion spectrum trimmed from %d to %d modes at a cluster boundary", count, cut)
        values, vectors = values[:cut], vectors[:, :cut]

    weights = node_integrals(grid_Y)[op.dof_map]
    vectors = _adapt_clusters(values, vectors, weights, mean_tol, rel_gap)
    means = vectors.T @ weights
    mean_zero = np.abs(means) <= mean_tol
    vectors = _orient(vectors, means, mean_zero)
    means = vectors.T @ weights
    branch = np.where(mean_zero, MEAN_ZERO, NONZERO_MEAN)

    spectrum = InclusionSpectrum(
        mu=values, psi_means=means, branch=branch, theta=grid_Y.tagged_volume,
        vectors=vectors, node_vectors=op.extend(vectors)[:, 0, :], complete=complete,
        resolution=grid_Y.resolution, residuals=result.residuals[:values.size],
        converged=result.converged,
    )
    log_event("INCLUSION_SPECTRUM", {
        "resolution": list(grid_Y.resolution), "modes": spectrum.count, "complete": complete,
        "nonzero_mean": int(spectrum.nonzero_mask.sum()), "parseval_mass": spectrum.parseval_mass,
        "theta": spectrum.theta,
    })
    return spectrum


@dataclass(frozen=True)
class BlochEntry:
    value: float          # κ·α
    multiplicity: int     # |Π̂_ε| × cluster dimension
    cluster_dim: int
    alpha: float


@dataclass
class BlochSpectrum:
    kappa: float
    n_cells: int
    entries: List[BlochEntry]

    def expanded(self) -> np.ndarray:
        """Values repeated by multiplicity, decreasing."""
        if not self.entries:
            return np.empty(0)
        return np.concatenate([np.full(e.multiplicity, e.value) for e in self.entries])

    def lower_bound(self, spectrum: InclusionSpectrum) -> float:
        """Uncomputed Bloch values lie below κ times the last computed inverse eigenvalue."""
        return self.kappa * spectrum.scaled_inv_bound()


def bloch_spectrum(inclusion: InclusionSpectrum, lattice: EpsilonLattice, kappa: float,
                   rel_gap: float = CLUSTER_GAP) -> BlochSpectrum:
    """κ·α_i with multiplicity |Π̂_ε| × cluster dimension, decreasing."""
    if not kappa > 0:
        raise ValidationError(f"kappa must be positive, got {kappa}")
    mu_zero = inclusion.mu[~inclusion.nonzero_mask]
    if mu_zero.size == 0:
        get_alert_manager().send_numerical_alert(
            "EMPTY_BLOCH_BRANCH", {"modes": inclusion.count, "resolution": list(inclusion.resolution)})
        raise SpectrumError(f"no mean-zero mode among {inclusion.count} computed modes; increase the mode count")
    n_cells = lattice.n_covering
    entries = [
        BlochEntry(value=kappa / cl.value, multiplicity=n_cells * cl.size,
                   cluster_dim=cl.size, alpha=1.0 / cl.value)
        for cl in cluster_values(mu_zero, rel_gap)
    ]
    return BlochSpectrum(kappa=float(kappa), n_cells=n_cells, entries=entries)
