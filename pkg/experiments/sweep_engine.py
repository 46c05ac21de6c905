"""
Convergence sweep
Fine-problem eigenvalues against the limit spectrum over a list of ε
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional
import logging
import time

import numpy as np
import pandas as pd

from analytics.rates import SlopeFit, fit_rates, pair_eigenvalues
from core.cell_homogenization import HomogenizedTensor, homogenized_tensor, solve_correctors
from core.coefficients import ContrastWeight
from core.eigensolve import DENSE_CAP, EigenRequest, dense_oracle_eigens, smallest_eigenpairs
from core.exceptions import HomogLabError, SpectrumError
from core.fem import assemble_fine_operator, assemble_homogenized_operator
from core.geometry import StructuredGrid, build_epsilon_domain, build_epsilon_lattice, build_unit_cell_grid
from core.inclusion_spectrum import InclusionSpectrum, bloch_spectrum, compute_inclusion_spectrum
from core.limit_spectrum import (BetaFunction, LimitSpectrumReport, limit_eta, max_intervals,
                                 residual_roots)
from experiments.config import ExperimentConfig
from monitoring.alerts import get_alert_manager
from monitoring.audit import log_event, log_stage_failure

logger = logging.getLogger(__name__)


def homogenized_dirichlet_eigenvalues(tensor: HomogenizedTensor, resolution: int, count: int,
                                      tolerance: float = 1e-10, seed: int = 0x5EED) -> np.ndarray:
    """Smallest eigenvalues θ_j of -div(Â∇) on (0,1)^d with Dirichlet data, ascending."""
    grid = StructuredGrid(dim=tensor.dim, resolution=(resolution,) * tensor.dim,
                          length=(1.0,) * tensor.dim, periodic=False)
    op = assemble_homogenized_operator(grid, tensor)
    if count > op.dimension / 4:
        if op.dimension > DENSE_CAP:
            raise SpectrumError(f"{count} homogenized eigenvalues need a finer grid than {resolution}")
        return dense_oracle_eigens(op).values[:count]
    return smallest_eigenpairs(EigenRequest(op, count, tolerance=tolerance, seed=seed)).values


@dataclass
class EpsilonStage:
    """Everything computed for one ε."""
    epsilon: float
    delta: float
    kappa: float
    resolution: int
    fine_eta: np.ndarray = field(default_factory=lambda: np.empty(0))
    limit_eta: np.ndarray = field(default_factory=lambda: np.empty(0))   # trusted prefix only
    labels: List[str] = field(default_factory=list)
    untrusted: int = 0     # computed η below the trusted floor, left unpaired
    errors: np.ndarray = field(default_factory=lambda: np.empty(0))
    fine_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: Dict[str, int] = field(default_factory=dict)
    runtimes: Dict[str, float] = field(default_factory=dict)
    limit: Optional[LimitSpectrumReport] = None
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass
class RateReport:
    k: int
    stages: List[EpsilonStage]
    slopes: Dict[str, SlopeFit]

    @property
    def epsilons(self) -> List[float]:
        return [s.epsilon for s in self.stages]

    @property
    def failures(self) -> Dict[float, str]:
        return {s.epsilon: s.failure for s in self.stages if not s.ok}

    def error_table(self) -> pd.DataFrame:
        """Rows per ε, one column per paired index i (NaN where missing)."""
        rows = []
        for s in self.stages:
            row = {f"i={i + 1}": np.nan for i in range(self.k)}
            row.update({f"i={i + 1}": float(e) for i, e in enumerate(s.errors)})
            rows.append(row)
        return pd.DataFrame(rows, columns=[f"i={i + 1}" for i in range(self.k)])

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for s in self.stages:
            if not s.ok:
                rows.append({"epsilon": s.epsilon, "delta": s.delta, "kappa": s.kappa, "i": 0,
                             "fine": np.nan, "limit": np.nan, "branch": "", "error": np.nan,
                             "status": "failed"})
                continue
            for i, err in enumerate(s.errors):
                rows.append({"epsilon": s.epsilon, "delta": s.delta, "kappa": s.kappa, "i": i + 1,
                             "fine": float(s.fine_eta[i]), "limit": float(s.limit_eta[i]),
                             "branch": s.labels[i] if i < len(s.labels) else "", "error": float(err),
                             "status": "ok"})
        return pd.DataFrame(rows)

    def slopes_dict(self) -> Dict:
        return {name: fit.to_dict() for name, fit in self.slopes.items()}

    def runtimes(self) -> Dict:
        return {f"{s.epsilon:.12g}": {"runtimes": s.runtimes, "iterations": s.iterations}
                for s in self.stages}

    def plot_rows(self):
        frame = self.to_frame()
        frame = frame[frame["status"] == "ok"]
        return frame["epsilon"], frame["error"], [f"i={i}" for i in frame["i"]]


class TheoremSweepEngine:
    """Fine eigenvalues of L_{ε,δ} paired with the limit spectrum, per ε."""

    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.geometry = cfg.geometry.build()
        self.A = cfg.coefficients.build(cfg.geometry.dim)
        self.grid_Y = build_unit_cell_grid(self.geometry, cfg.cell.resolution)
        self._spectrum: Optional[InclusionSpectrum] = None

    @property
    def spectrum(self) -> InclusionSpectrum:
        """Inclusion spectrum; independent of ε and δ, computed once."""
        if self._spectrum is None:
            tol = self.cfg.tolerances
            self._spectrum = compute_inclusion_spectrum(
                self.grid_Y, self.A, count=self.cfg.eigen.inclusion_modes,
                tolerance=tol.inclusion_tolerance, mean_tol=tol.mean_tol, seed=self.cfg.seed,
                rel_gap=tol.cluster_gap)
        return self._spectrum

    def memory_budget(self) -> Dict[str, Dict[str, float]]:
        """Fine-grid sizes announced before any solve."""
        budget = {}
        for n in self.cfg.epsilons:
            res = n * self.cfg.subcells
            dofs = (res - 1) ** self.cfg.geometry.dim * self.A.m
            nnz = dofs * 3 ** self.cfg.geometry.dim * self.A.m
            budget[f"1/{n}"] = {"resolution": res, "dofs": dofs, "approx_matrix_mb": 2 * nnz * 12 / 2 ** 20}
        log_event("SWEEP_BUDGET", budget)
        return budget

    def tensor(self, delta: float) -> HomogenizedTensor:
        chi = solve_correctors(self.grid_Y, self.A, delta, method=self.cfg.cell.solver,
                               rtol=self.cfg.cell.rtol)
        return homogenized_tensor(self.grid_Y, self.A, delta, chi)

    def limit_report(self, n: int, delta: float, resolution: int) -> LimitSpectrumReport:
        """η list for ε = 1/n: Bloch values plus residual roots."""
        eps = 1.0 / n
        kappa = eps ** 2 / delta
        lattice = build_epsilon_lattice(self.geometry.dim, n)
        spectrum = self.spectrum
        bloch = bloch_spectrum(spectrum, lattice, kappa, rel_gap=self.cfg.tolerances.cluster_gap)
        thetas = homogenized_dirichlet_eigenvalues(
            self.tensor(delta), self.cfg.eigen.homogenized_resolution or resolution,
            self.cfg.eigen.thetas, seed=self.cfg.seed)
        bf = BetaFunction.from_spectrum(spectrum, kappa)
        intervals = min(self.cfg.eigen.intervals, max_intervals(bf))
        roots = residual_roots(bf, thetas, intervals, epsilon=eps) if intervals >= 1 else None
        return limit_eta(bloch, roots, bloch_floor=bloch.lower_bound(spectrum))

    def run_epsilon(self, n: int) -> EpsilonStage:
        cfg = self.cfg
        eps = 1.0 / n
        delta = cfg.contrast.delta_for(eps)
        stage = EpsilonStage(epsilon=eps, delta=delta, kappa=eps ** 2 / delta,
                             resolution=n * cfg.subcells)
        try:
            start = time.perf_counter()
            _, grid = build_epsilon_domain(self.geometry, eps, cfg.subcells)
            op = assemble_fine_operator(grid, self.A, ContrastWeight(delta, eps), eps)
            stage.runtimes["assembly"] = time.perf_counter() - start

            start = time.perf_counter()
            fine = smallest_eigenpairs(EigenRequest(op, cfg.eigen.count, tolerance=cfg.eigen.tolerance,
                                                    seed=cfg.seed, method=cfg.eigen.method))
            stage.runtimes["fine_eigensolve"] = time.perf_counter() - start
            stage.iterations["fine_eigensolve"] = int(fine.iterations)
            stage.fine_eta = fine.inverse_values()
            stage.fine_residuals = fine.residuals

            start = time.perf_counter()
            report = self.limit_report(n, delta, stage.resolution)
            stage.runtimes["limit_spectrum"] = time.perf_counter() - start
            stage.limit = report
            stage.limit_eta = report.trusted_eta()
            stage.labels = report.labels()[:stage.limit_eta.size]
            stage.untrusted = report.eta().size - stage.limit_eta.size
            if stage.limit_eta.size < cfg.eigen.count:
                get_alert_manager().send_numerical_alert("LIMIT_TRUST_SHORTFALL", {
                    "epsilon": eps, "requested": cfg.eigen.count, "trusted": int(stage.limit_eta.size),
                    "trusted_floor": report.trusted_floor, "untrusted": stage.untrusted})
            stage.errors = pair_eigenvalues(stage.fine_eta, stage.limit_eta, cfg.eigen.count)
            log_event("SWEEP_STAGE", {"epsilon": eps, "delta": delta, "paired": int(stage.errors.size),
                                      "untrusted": stage.untrusted,
                                      "max_error": float(stage.errors.max(initial=0.0))})
        except HomogLabError as exc:
            stage.failure = f"{type(exc).__name__}: {exc}"
            log_stage_failure("sweep_epsilon", exc, {"epsilon": eps, "delta": delta})
            get_alert_manager().send_numerical_alert("SWEEP_STAGE_FAILED", {"epsilon": eps, "error": str(exc)})
        return stage

    def run(self) -> RateReport:
        self.memory_budget()
        _ = self.spectrum
        ns = list(self.cfg.epsilons)
        if self.threads > 1 and len(ns) > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, len(ns))) as pool:
                stages = list(pool.map(self.run_epsilon, ns))
        else:
            stages = [self.run_epsilon(n) for n in ns]

        report = RateReport(k=self.cfg.eigen.count, stages=stages, slopes={})
        ok = [s for s in stages if s.ok]
        if len(ok) >= 2:
            table = report.error_table()
            mask = [s.ok for s in stages]
            report.slopes = fit_rates([s.epsilon for s in ok], table[mask].reset_index(drop=True))
        else:
            logger.info("sweep with %d successful epsilon values; slopes undefined", len(ok))
        log_event("SWEEP_DONE", {"epsilons": report.epsilons, "failures": len(report.failures),
                                 "aggregate_slope": report.slopes["aggregate"].slope
                                 if "aggregate" in report.slopes else None})
        return report


def run_theorem1_sweep(cfg: ExperimentConfig, threads: int = 1) -> RateReport:
    return TheoremSweepEngine(cfg, threads).run()
