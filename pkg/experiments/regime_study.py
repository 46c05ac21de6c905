"""
Regime Study
Fine spectra at δ = ε^p against the limit predicted for each regime
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional
import logging

import numpy as np
import pandas as pd

from core.coefficients import ContrastWeight
from core.eigensolve import EigenRequest, eigenpairs_near, smallest_eigenpairs
from core.exceptions import HomogLabError, ValidationError
from core.fem import assemble_fine_operator
from core.geometry import build_epsilon_domain, build_unit_cell_grid
from core.inclusion_spectrum import InclusionSpectrum, bloch_spectrum, compute_inclusion_spectrum
from core.unfolding import UnfoldingGrid, cell_means, nodal_to_cells
from experiments.config import ExperimentConfig
from experiments.sweep_engine import TheoremSweepEngine, homogenized_dirichlet_eigenvalues
from monitoring.audit import log_event, log_stage_failure

logger = logging.getLogger(__name__)

SUBCRITICAL = "delta >> eps^2"
CRITICAL = "delta ~ eps^2"
SUPERCRITICAL = "delta << eps^2"
INCLUSION = "inclusion"
HOMOGENIZED = "homogenized"


def regime_of(p: float) -> str:
    if p < 2:
        return SUBCRITICAL
    if p > 2:
        return SUPERCRITICAL
    return CRITICAL


@dataclass
class BlochCluster:
    target: float
    expected_size: int
    size: int
    spread: float
    mean_gap: float
    window: List[float]


@dataclass
class RegimeResult:
    p: float
    regime: str
    epsilon: float
    delta: float
    kappa: float
    fine_values: np.ndarray
    references: np.ndarray
    comparison: str
    relative_gaps: np.ndarray
    branches: List[str] = field(default_factory=list)
    cluster: Optional[BlochCluster] = None
    failure: Optional[str] = None

    @property
    def max_gap(self) -> float:
        return float(self.relative_gaps.max()) if self.relative_gaps.size else float("nan")


@dataclass
class RegimeReport:
    results: List[RegimeResult] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.results:
            for i, (fine, ref, gap) in enumerate(zip(r.fine_values, r.references, r.relative_gaps)):
                rows.append({"p": r.p, "regime": r.regime, "epsilon": r.epsilon, "delta": r.delta,
                             "kappa": r.kappa, "comparison": r.comparison, "i": i + 1,
                             "branch": r.branches[i] if i < len(r.branches) else "",
                             "fine": float(fine), "reference": float(ref), "relative_gap": float(gap)})
            if r.failure:
                rows.append({"p": r.p, "regime": r.regime, "epsilon": r.epsilon, "delta": r.delta,
                             "kappa": r.kappa, "comparison": "failed", "i": 0, "branch": "", "fine": np.nan,
                             "reference": np.nan, "relative_gap": np.nan})
        return pd.DataFrame(rows)

    def summary(self) -> Dict:
        out = {}
        for r in self.results:
            entry = {"regime": r.regime, "epsilon": r.epsilon, "delta": r.delta, "kappa": r.kappa,
                     "comparison": r.comparison, "max_relative_gap": r.max_gap, "failure": r.failure}
            if r.cluster is not None:
                c = r.cluster
                entry["bloch_cluster"] = {"target": c.target, "expected_size": c.expected_size,
                                          "size": c.size, "spread": c.spread, "mean_gap": c.mean_gap}
            out[f"p={r.p:g}"] = entry
        return out


class RegimeAnalyzer:
    """Runs one fine problem per power p and compares it with its regime's limit."""

    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.engine = TheoremSweepEngine(cfg, threads)
        self._subcell_spectrum: Optional[InclusionSpectrum] = None

    @property
    def subcell_spectrum(self) -> InclusionSpectrum:
        """Complete inclusion spectrum at the fine grid's resolution of one ε-cell."""
        if self._subcell_spectrum is None:
            tol = self.cfg.tolerances
            grid = build_unit_cell_grid(self.engine.geometry, self.cfg.subcells)
            self._subcell_spectrum = compute_inclusion_spectrum(
                grid, self.engine.A, count=None, mean_tol=tol.mean_tol, seed=self.cfg.seed,
                rel_gap=tol.cluster_gap)
        return self._subcell_spectrum

    def _fine(self, n: int, delta: float):
        eps = 1.0 / n
        lattice, grid = build_epsilon_domain(self.engine.geometry, eps, self.cfg.subcells)
        op = assemble_fine_operator(grid, self.engine.A, ContrastWeight(delta, eps), eps, self.threads)
        return lattice, grid, op

    def _subcritical(self, result: RegimeResult, op, n: int):
        cfg = self.cfg
        fine = smallest_eigenpairs(EigenRequest(op, cfg.regimes.count, tolerance=cfg.eigen.tolerance,
                                                seed=cfg.seed, method=cfg.eigen.method))
        thetas = homogenized_dirichlet_eigenvalues(self.engine.tensor(result.delta), n * cfg.subcells,
                                                   cfg.regimes.count, seed=cfg.seed)
        result.fine_values = fine.values
        result.references = thetas
        result.branches = [HOMOGENIZED] * thetas.size
        result.comparison = "homogenized eigenvalues theta_j(A_delta)"

    def _critical(self, result: RegimeResult, op, lattice, grid, n: int):
        cfg = self.cfg
        fine = smallest_eigenpairs(EigenRequest(op, cfg.regimes.count, tolerance=cfg.eigen.tolerance,
                                                seed=cfg.seed, method=cfg.eigen.method))
        report = self.engine.limit_report(n, result.delta, n * cfg.subcells)
        eta = report.trusted_eta()
        k = min(fine.count, eta.size)
        if k < fine.count:
            logger.info("p=%g: %d of %d limit values trusted (floor %.6g)", result.p, eta.size,
                        fine.count, report.trusted_floor)
        result.fine_values = fine.values[:k]
        result.references = 1.0 / eta[:k]
        result.branches = report.labels()[:k]
        result.comparison = "trusted merged limit spectrum 1/eta"

        # the fine grid resolves each inclusion at the subcell resolution
        bloch = bloch_spectrum(self.subcell_spectrum, lattice, result.kappa, rel_gap=cfg.tolerances.cluster_gap)
        leading = bloch.entries[0]
        target = 1.0 / leading.value
        expected = lattice.n_inner * leading.cluster_dim
        wanted = min(expected + cfg.regimes.cluster_margin, op.dimension // 4)
        near = eigenpairs_near(EigenRequest(op, wanted, tolerance=cfg.eigen.tolerance,
                                            shift=target, seed=cfg.seed))
        result.cluster = self._bloch_cluster(near, op, grid, n, target, expected)

    def _bloch_cluster(self, near, op, grid, n: int, target: float, expected: int) -> BlochCluster:
        """Count fine eigenvectors near the target whose ε-cell means vanish."""
        ugrid = UnfoldingGrid(dim=grid.dim, n=n, subcells=self.cfg.subcells)
        nodal = op.extend(near.vectors)[:, 0, :]
        bloch = []
        for col, value in enumerate(near.values):
            cells = nodal_to_cells(nodal[:, col], grid)
            norm = ugrid.l2_norm(cells)
            means = cell_means(cells, ugrid)
            ratio = float(np.sqrt(np.sum(means ** 2) * ugrid.epsilon ** grid.dim)) / norm if norm > 0 else 0.0
            if ratio <= self.cfg.regimes.bloch_mean_ratio and abs(value - target) <= 0.05 * target:
                bloch.append(value)
        bloch = np.asarray(bloch)
        if bloch.size == 0:
            return BlochCluster(target, expected, 0, float("nan"), float("nan"), [])
        return BlochCluster(target=target, expected_size=expected, size=int(bloch.size),
                            spread=float((bloch.max() - bloch.min()) / target),
                            mean_gap=float(abs(bloch.mean() - target) / target),
                            window=[float(bloch.min()), float(bloch.max())])

    def _supercritical(self, result: RegimeResult, op, lattice, n: int):
        cfg = self.cfg
        fine = smallest_eigenpairs(EigenRequest(op, cfg.regimes.count, tolerance=cfg.eigen.tolerance,
                                                seed=cfg.seed, method=cfg.eigen.method))
        spectrum = self.subcell_spectrum
        thetas = homogenized_dirichlet_eigenvalues(self.engine.tensor(result.delta), n * cfg.subcells,
                                                   cfg.regimes.count, seed=cfg.seed)
        # one decoupled inclusion spectrum per ε-cell
        inclusion = np.repeat(spectrum.mu / result.kappa, lattice.n_covering)
        candidates = np.concatenate([inclusion, thetas / (1.0 - spectrum.theta)])
        labels = np.array([INCLUSION] * inclusion.size + [HOMOGENIZED] * thetas.size)
        order = np.argsort(candidates, kind="stable")
        k = min(fine.count, candidates.size)
        result.fine_values = fine.values[:k]
        result.references = candidates[order][:k]
        result.branches = labels[order][:k].tolist()
        result.comparison = "sorted union of mu_i/kappa (per cell) and theta_j/(1-theta)"

    def run_power(self, p: float) -> RegimeResult:
        n = self.cfg.regimes.epsilon
        eps = 1.0 / n
        delta = eps ** p
        result = RegimeResult(p=p, regime=regime_of(p), epsilon=eps, delta=delta, kappa=eps ** 2 / delta,
                              fine_values=np.empty(0), references=np.empty(0), comparison="",
                              relative_gaps=np.empty(0))
        try:
            lattice, grid, op = self._fine(n, delta)
            if result.regime == SUBCRITICAL:
                self._subcritical(result, op, n)
            elif result.regime == CRITICAL:
                self._critical(result, op, lattice, grid, n)
            else:
                self._supercritical(result, op, lattice, n)
            result.relative_gaps = np.abs(result.fine_values - result.references) / np.abs(result.references)
        except HomogLabError as exc:
            result.failure = f"{type(exc).__name__}: {exc}"
            log_stage_failure("regime", exc, {"p": p, "epsilon": eps})
        log_event("REGIME", {"p": p, "regime": result.regime, "max_relative_gap": result.max_gap,
                             "failure": result.failure})
        return result

    def run(self) -> RegimeReport:
        powers = self.cfg.regimes.powers
        if not powers:
            raise ValidationError("regime study needs at least one power")
        return RegimeReport(results=[self.run_power(p) for p in powers])


def run_regime_study(cfg: ExperimentConfig, threads: int = 1) -> RegimeReport:
    return RegimeAnalyzer(cfg, threads).run()
