"""
Coefficient fields A(y), contrast weights and structural validation.

A field maps points y (rows of an (N, d) array) to arrays of shape
(N, d, d, m, m) holding a_{ij}^{αβ}(y). Evaluators only ever see the
fractional part of y, so periodicity holds by construction.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional
import logging

import numpy as np
import pandas as pd
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.distance import pdist

from core.exceptions import CoefficientError, GeometryError, ValidationError
from core.geometry import StructuredGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoefficientField:
    """Periodic, symmetric, elliptic coefficient tensor."""
    dim: int
    m: int
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    nu: float
    descriptor: str
    params: Dict = field(default_factory=dict, compare=False)
    holder_exponent: float = 1.0

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.mod(np.atleast_2d(np.asarray(y, dtype=float)), 1.0)
        values = np.asarray(self.evaluator(y), dtype=float)
        expected = (y.shape[0], self.dim, self.dim, self.m, self.m)
        if values.shape != expected:
            raise CoefficientError(f"evaluator returned shape {values.shape}, expected {expected}")
        bad = ~np.isfinite(values.reshape(y.shape[0], -1)).all(axis=1)
        if bad.any():
            raise CoefficientError("non-finite coefficient entry", point=y[np.argmax(bad)])
        return values

    def scaled(self, s: float) -> "CoefficientField":
        """Field s·A."""
        if s <= 0:
            raise ValidationError(f"scale factor must be positive, got {s}")
        base = self.evaluator
        nu = min(self.nu * s, self.nu / s)
        return CoefficientField(dim=self.dim, m=self.m, evaluator=lambda y: s * base(y),
                                nu=nu, descriptor=self.descriptor,
                                params={**self.params, "scale": s * self.params.get("scale", 1.0)},
                                holder_exponent=self.holder_exponent)

    def sample_cells(self, grid: StructuredGrid, period: float = 1.0) -> np.ndarray:
        """Values at cell barycenters, y = {x / period}.

        Returns shape (n_cells, d, d, m, m).
        """
        return self(grid.cell_centers() / period)


def _isotropic(dim: int, m: int, scalar: np.ndarray) -> np.ndarray:
    eye = np.einsum("ij,ab->ijab", np.eye(dim), np.eye(m))
    return scalar[:, None, None, None, None] * eye[None]


def identity(dim: int = 2, m: int = 1, scale: float = 1.0) -> CoefficientField:
    return CoefficientField(
        dim=dim, m=m,
        evaluator=lambda y: _isotropic(dim, m, np.full(y.shape[0], scale)),
        nu=min(scale, 1.0 / scale), descriptor="identity", params={"scale": scale},
    )


def _periodic_step(t: np.ndarray, fraction: float, width: float) -> np.ndarray:
    """1 on [0, fraction), 0 on [fraction, 1); smoothed over `width` if positive."""
    if width <= 0:
        return (t < fraction).astype(float)
    out = np.zeros_like(t)
    for shift in (-1.0, 0.0, 1.0):
        out += 0.5 * (np.tanh((t + shift) / width) - np.tanh((t + shift - fraction) / width))
    return np.clip(out, 0.0, 1.0)


def layered(dim: int = 2, values=(1.0, 4.0), fraction: float = 0.5,
            axis: int = 0, smoothing: float = 0.0, m: int = 1) -> CoefficientField:
    """Scalar laminate a(y_axis): values[0] on [0, fraction), values[1] after."""
    lo, hi = float(values[0]), float(values[1])
    if min(lo, hi) <= 0:
        raise ValidationError("layer values must be positive")

    def evaluate(y):
        s = _periodic_step(y[:, axis], fraction, smoothing)
        return _isotropic(dim, m, hi + (lo - hi) * s)

    nu = min(min(lo, hi), 1.0 / max(lo, hi))
    return CoefficientField(
        dim=dim, m=m, evaluator=evaluate, nu=nu, descriptor="layered",
        params={"values": [lo, hi], "fraction": fraction, "axis": axis, "smoothing": smoothing},
    )


def checkerboard(dim: int = 2, mean: float = 2.0, amplitude: float = 1.0, m: int = 1) -> CoefficientField:
    """Smoothed checkerboard a(y) = mean + amplitude·Π sin(2πy_k)."""
    if amplitude >= mean:
        raise ValidationError("checkerboard amplitude must stay below the mean")

    def evaluate(y):
        return _isotropic(dim, m, mean + amplitude * np.prod(np.sin(2 * np.pi * y), axis=1))

    lo, hi = mean - amplitude, mean + amplitude
    return CoefficientField(dim=dim, m=m, evaluator=evaluate, nu=min(lo, 1.0 / hi),
                            descriptor="checkerboard", params={"mean": mean, "amplitude": amplitude})


def block_diagonal(*fields: CoefficientField) -> CoefficientField:
    """System field with one scalar block per component (m = len(fields))."""
    dim = fields[0].dim
    if any(f.dim != dim or f.m != 1 for f in fields):
        raise ValidationError("block_diagonal expects scalar fields of equal dimension")
    m = len(fields)

    def evaluate(y):
        out = np.zeros((y.shape[0], dim, dim, m, m))
        for a, f in enumerate(fields):
            out[:, :, :, a, a] = f.evaluator(y)[:, :, :, 0, 0]
        return out

    return CoefficientField(dim=dim, m=m, evaluator=evaluate, nu=min(f.nu for f in fields),
                            descriptor="block-diagonal",
                            params={"blocks": [f.descriptor for f in fields]},
                            holder_exponent=min(f.holder_exponent for f in fields))


def sampled(path, dim: int = 2, m: int = 1, nu: Optional[float] = None,
            holder_exponent: Optional[float] = None) -> CoefficientField:
    """Field interpolated (multilinearly, periodically) from a CSV table.

    Columns: y1..yd on a regular lattice of [0,1)^d followed by the
    (d·d·m·m) entries in C-order of (i, j, α, β).
    """
    if holder_exponent is None:
        raise ValidationError("user-sampled fields must declare a Hölder exponent")
    frame = pd.read_csv(path, comment="#")
    coords = frame.iloc[:, :dim].to_numpy(dtype=float)
    entries = frame.iloc[:, dim:].to_numpy(dtype=float)
    if entries.shape[1] != dim * dim * m * m:
        raise ValidationError(f"expected {dim * dim * m * m} entry columns, found {entries.shape[1]}")
    axes = [np.unique(coords[:, k]) for k in range(dim)]
    order = np.lexsort(tuple(coords[:, k] for k in reversed(range(dim))))
    table = entries[order].reshape(tuple(len(a) for a in axes) + (dim, dim, m, m))
    # append the periodic image at y = 1 so interpolation wraps
    for k in range(dim):
        table = np.concatenate([table, np.take(table, [0], axis=k)], axis=k)
        axes[k] = np.append(axes[k], axes[k][0] + 1.0)
    interp = RegularGridInterpolator(tuple(axes), table, method="linear")
    axes_min = np.array([a[0] for a in axes])

    def evaluate(y):
        return interp(np.where(y < axes_min, y + 1.0, y))

    if nu is None:
        sym = entries.reshape(-1, dim, dim, m, m).transpose(0, 1, 3, 2, 4).reshape(-1, dim * m, dim * m)
        eig = np.linalg.eigvalsh(0.5 * (sym + sym.transpose(0, 2, 1)))
        nu = float(min(eig.min(), 1.0 / eig.max()))
    return CoefficientField(dim=dim, m=m, evaluator=evaluate, nu=nu, descriptor="sampled",
                            params={"path": str(path)}, holder_exponent=holder_exponent)


def from_descriptor(name: str, dim: int = 2, **params) -> CoefficientField:
    """Build a field from its config descriptor."""
    builders = {
        "identity": identity,
        "layered": layered,
        "checkerboard": checkerboard,
        "sampled": sampled,
    }
    if name not in builders:
        raise ValidationError(f"unknown coefficient descriptor '{name}' (known: {sorted(builders)})")
    if name == "sampled":
        return sampled(params.pop("path"), dim=dim, **params)
    return builders[name](dim=dim, **params)


def as_matrices(values: np.ndarray) -> np.ndarray:
    """(N, d, d, m, m) -> (N, dm, dm) with row index i·m + α."""
    n, d, _, m, _ = values.shape
    return values.transpose(0, 1, 3, 2, 4).reshape(n, d * m, d * m)


@dataclass
class ValidationReport:
    """Outcome of validate_structure."""
    symmetry_defect: float
    ellipticity_lower: float
    ellipticity_upper: float
    nu: float
    holder_exponent: float
    holder_quotient: float
    samples: int
    passed: bool
    failures: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "symmetry_defect": self.symmetry_defect,
            "ellipticity_lower": self.ellipticity_lower,
            "ellipticity_upper": self.ellipticity_upper,
            "nu": self.nu,
            "holder_exponent": self.holder_exponent,
            "holder_quotient": self.holder_quotient,
            "samples": self.samples,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def validate_structure(A: CoefficientField, samples: int, directions: int,
                       holder_exponent: Optional[float] = None,
                       symmetry_tol: float = 1e-14, seed: int = 0x5EED) -> ValidationReport:
    """Sample symmetry, ellipticity and a Hölder quotient of A.

    Points form a regular lattice of `samples` per axis (cell centers);
    ellipticity is tested with `directions` random ξ per point.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    if directions < 1:
        raise ValidationError("directions must be >= 1")
    axes = [(np.arange(samples) + 0.5) / samples] * A.dim
    points = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    mats = as_matrices(A(points))

    scale = max(float(np.abs(mats).max()), np.finfo(float).tiny)
    sym = float(np.abs(mats - mats.transpose(0, 2, 1)).max()) / scale

    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((directions, mats.shape[1]))
    forms = np.einsum("pa,nab,pb->np", xi, mats, xi) / np.einsum("pa,pa->p", xi, xi)[None, :]
    lower, upper = float(forms.min()), float(forms.max())

    lam = A.holder_exponent if holder_exponent is None else holder_exponent
    quotient = 0.0
    if points.shape[0] > 1 and lam > 0:
        # minimal-image distance per axis; A(y) = A(y + n)
        gaps = [pdist(points[:, [k]], "cityblock") for k in range(points.shape[1])]
        dist = np.sqrt(sum(np.minimum(g, 1.0 - g) ** 2 for g in gaps))
        jumps = pdist(mats.reshape(mats.shape[0], -1))
        quotient = float(np.max(jumps / dist ** lam))

    failures = []
    if sym > symmetry_tol:
        failures.append(f"symmetry defect {sym:.3e} exceeds {symmetry_tol:.1e}")
    if lower < A.nu * (1 - 1e-12):
        failures.append(f"ellipticity lower bound {lower:.6g} below nu={A.nu:.6g}")
    if upper > (1.0 / A.nu) * (1 + 1e-12):
        failures.append(f"ellipticity upper bound {upper:.6g} above 1/nu={1.0 / A.nu:.6g}")
    report = ValidationReport(
        symmetry_defect=sym, ellipticity_lower=lower, ellipticity_upper=upper, nu=A.nu,
        holder_exponent=lam, holder_quotient=quotient, samples=points.shape[0],
        passed=not failures, failures=failures,
    )
    if failures:
        logger.warning("coefficient %s failed validation: %s", A.descriptor, "; ".join(failures))
    return report


@dataclass(frozen=True)
class ContrastWeight:
    """Λ_δ: δ on inclusion cells, 1 on matrix cells."""
    delta: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValidationError(f"contrast delta must be positive, got {self.delta}")

    @property
    def kappa(self) -> float:
        if self.epsilon is None:
            raise ValidationError("kappa needs an epsilon binding")
        return self.epsilon ** 2 / self.delta

    def bind(self, epsilon: float) -> "ContrastWeight":
        return ContrastWeight(delta=self.delta, epsilon=float(epsilon))


def contrast_weight_values(w: ContrastWeight, grid: StructuredGrid) -> np.ndarray:
    """Per-cell Λ values in flat cell order."""
    if not grid.is_tagged:
        raise GeometryError("contrast weights need a grid with region tags")
    tags = grid.tags_flat()
    return np.where(tags, w.delta, 1.0)
