"""
Smallest eigenpairs of symmetric pencils K u = λ M u.

Every result is post-processed by a Rayleigh-Ritz step on the returned
subspace, so vectors are M-orthonormal and values are Ritz values.
"""

from dataclasses import dataclass, field
from typing import List, Optional
import logging

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg, splu

from core.exceptions import EigenSolverError, ValidationError
from core.fem import Constraint, SparseSymmetricOperator
from monitoring.alerts import get_alert_manager
from monitoring.audit import log_event

logger = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED
DENSE_CAP = 2000
CLUSTER_GAP = 1e-6
METHODS = ("shift-invert", "lobpcg")


@dataclass(frozen=True)
class EigenRequest:
    operator: SparseSymmetricOperator
    count: int
    tolerance: float = 1e-8
    shift: Optional[float] = None
    seed: int = DEFAULT_SEED
    method: str = "shift-invert"
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError(f"eigen count must be >= 1, got {self.count}")
        if not (0.0 < self.tolerance <= 1e-2):
            raise ValidationError(f"eigen tolerance {self.tolerance} outside (0, 1e-2]")
        if self.method not in METHODS:
            raise ValidationError(f"unknown eigen method '{self.method}' (known: {METHODS})")


@dataclass(frozen=True)
class EigenCluster:
    start: int
    size: int
    value: float


@dataclass
class EigenResult:
    values: np.ndarray                 # ascending
    vectors: np.ndarray = field(repr=False)  # columns, M-orthonormal
    residuals: np.ndarray
    iterations: int
    converged: bool
    method: str
    tolerance: float = 1e-8

    @property
    def count(self) -> int:
        return int(self.values.size)

    def inverse_values(self) -> np.ndarray:
        """Eigenvalues of the inverse operator, decreasing."""
        return 1.0 / self.values

    def clusters(self, rel_gap: float = CLUSTER_GAP) -> List[EigenCluster]:
        return cluster_values(self.values, rel_gap)


def cluster_values(values: np.ndarray, rel_gap: float = CLUSTER_GAP) -> List[EigenCluster]:
    """Group sorted values whose consecutive relative gaps are below rel_gap."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    clusters = []
    start = 0
    for k in range(1, values.size + 1):
        if k == values.size or abs(values[k] - values[k - 1]) > rel_gap * max(abs(values[k]), abs(values[k - 1])):
            clusters.append(EigenCluster(start, k - start, float(values[start:k].mean())))
            start = k
    return clusters


def _rayleigh_ritz(K, M, V: np.ndarray):
    """Ritz pairs of (K, M) on span(V); Ritz vectors are M-orthonormal."""
    KV = K @ V
    MV = M @ V
    A = V.T @ KV
    B = V.T @ MV
    values, coeffs = scipy.linalg.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    return values, V @ coeffs


def _residuals(K, M, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    R = K @ vectors - (M @ vectors) * values[None, :]
    Mv = M @ vectors
    denom = np.abs(values) * np.linalg.norm(Mv, axis=0)
    denom = np.where(denom > 0, denom, 1.0)
    return np.linalg.norm(R, axis=0) / denom


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs[None, :]


def _null_modes(op: SparseSymmetricOperator) -> int:
    return op.m if op.constraint in (Constraint.PERIODIC_MEAN_ZERO, Constraint.PERIODIC) else 0


def _shift_invert(req: EigenRequest, wanted: int):
    op = req.operator
    K, M = op.stiffness, op.mass
    sigma = req.shift
    if sigma is None:
        sigma = -1.0 if _null_modes(op) else 0.0
    lu = splu((K - sigma * M).tocsc())
    calls = {"n": 0}

    def apply(x):
        calls["n"] += 1
        return lu.solve(np.asarray(x, dtype=float))

    opinv = LinearOperator(K.shape, matvec=apply, dtype=float)
    v0 = np.random.default_rng(req.seed).standard_normal(K.shape[0])
    try:
        _, vectors = eigsh(K, k=wanted, M=M, sigma=sigma, which="LM", OPinv=opinv, v0=v0,
                           tol=req.tolerance * 1e-2, maxiter=req.max_iterations)
        converged = True
    except ArpackNoConvergence as exc:
        if exc.eigenvectors is None or exc.eigenvectors.size == 0:
            raise EigenSolverError(f"shift-invert Lanczos failed on {op.label}: {exc}") from exc
        vectors = exc.eigenvectors
        converged = False
    return vectors, calls["n"], converged


def _lobpcg(req: EigenRequest, wanted: int):
    op = req.operator
    K, M = op.stiffness, op.mass
    X = np.random.default_rng(req.seed).standard_normal((K.shape[0], wanted))
    diag = K.diagonal().copy()
    diag[diag == 0] = 1.0
    precond = LinearOperator(K.shape, matvec=lambda x: np.ravel(x) / diag,
                             matmat=lambda X: X / diag[:, None], dtype=float)
    Y = None
    if _null_modes(op):
        # iterate M-orthogonally to the constants
        Y = np.tile(np.eye(op.m), (op.dimension // op.m, 1))
    _, vectors, history = lobpcg(K, X, B=M, M=precond, Y=Y, tol=req.tolerance, largest=False,
                                 maxiter=req.max_iterations or 500, retResidualNormsHistory=True)
    return vectors, len(history), True


def smallest_eigenpairs(req: EigenRequest) -> EigenResult:
    """k smallest eigenpairs (excluding the constant mode of periodic operators)."""
    op = req.operator
    nulls = _null_modes(op)
    if req.count > (op.dimension - nulls) / 4:
        raise ValidationError(
            f"requested {req.count} eigenpairs from a problem of dimension {op.dimension}; "
            "at most dimension/4 (use dense_oracle_eigens for small problems)")
    K, M = op.stiffness, op.mass
    wanted = req.count + nulls

    method = req.method
    if method == "lobpcg":
        vectors, iterations, converged = _lobpcg(req, req.count)
        values, vectors = _rayleigh_ritz(K, M, vectors)
        residuals = _residuals(K, M, values, vectors)
        if residuals.max() > req.tolerance:
            logger.info("LOBPCG residual %.2e above %.2e on %s; falling back to shift-invert",
                        residuals.max(), req.tolerance, op.label)
            method = "shift-invert"
    if method == "shift-invert":
        vectors, iterations, converged = _shift_invert(req, wanted)
        values, vectors = _rayleigh_ritz(K, M, vectors)
        values, vectors = values[nulls:], vectors[:, nulls:]
        residuals = _residuals(K, M, values, vectors)

    values, vectors = values[:req.count], _fix_signs(vectors[:, :req.count])
    residuals = residuals[:req.count]
    converged = bool(converged and residuals.max() <= req.tolerance)
    result = EigenResult(values=values, vectors=vectors, residuals=residuals, iterations=iterations,
                         converged=converged, method=method, tolerance=req.tolerance)
    log_event("EIGENSOLVE", {"operator": op.label, "method": method, "count": req.count,
                             "iterations": iterations, "max_residual": float(residuals.max()),
                             "converged": converged})
    if not converged:
        get_alert_manager().send_numerical_alert(
            "EIGEN_PARTIAL",
            {"operator": op.label, "max_residual": float(residuals.max()), "tolerance": req.tolerance},
        )
    return result


def eigenpairs_near(req: EigenRequest) -> EigenResult:
    """The `count` eigenpairs closest to req.shift, ascending."""
    if req.shift is None:
        raise ValidationError("eigenpairs_near needs a shift")
    op = req.operator
    if req.count > op.dimension / 4:
        raise ValidationError(f"requested {req.count} eigenpairs from dimension {op.dimension}")
    vectors, iterations, converged = _shift_invert(req, req.count)
    values, vectors = _rayleigh_ritz(op.stiffness, op.mass, vectors)
    residuals = _residuals(op.stiffness, op.mass, values, vectors)
    converged = bool(converged and residuals.max() <= req.tolerance)
    log_event("EIGENSOLVE", {"operator": op.label, "method": "shift-invert", "shift": req.shift,
                             "count": req.count, "iterations": iterations, "converged": converged})
    return EigenResult(values=values, vectors=_fix_signs(vectors), residuals=residuals,
                       iterations=iterations, converged=converged, method="shift-invert",
                       tolerance=req.tolerance)


def dense_oracle_eigens(operator: SparseSymmetricOperator) -> EigenResult:
    """Full dense decomposition of the pencil, ground truth for small problems."""
    if operator.dimension > DENSE_CAP:
        raise ValidationError(f"dense oracle capped at dimension {DENSE_CAP}, got {operator.dimension}")
    K = operator.stiffness.toarray()
    M = operator.mass.toarray()
    values, vectors = scipy.linalg.eigh(0.5 * (K + K.T), 0.5 * (M + M.T))
    nulls = _null_modes(operator)
    values, vectors = values[nulls:], _fix_signs(vectors[:, nulls:])
    residuals = _residuals(K, M, values, vectors)
    return EigenResult(values=values, vectors=vectors, residuals=residuals, iterations=1,
                       converged=True, method="dense", tolerance=float(max(residuals.max(initial=0.0), 1e-12)))


def dense_pencil_eigens(K: np.ndarray, M: np.ndarray) -> EigenResult:
    """Dense decomposition of an explicit (K, M) pair."""
    return dense_oracle_eigens(SparseSymmetricOperator.from_matrices(K, M, label="dense-pencil"))
