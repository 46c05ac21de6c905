"""
Command-line surface.

    homoglab <command> [--config PATH] [--out DIR] [--threads N] [--seed HEX]

Exit status 0 on success, 1 on validation errors (including bad usage),
2 on numerical failures.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional
import argparse
import logging
import sys

import numpy as np
import pandas as pd

from analytics.rates import fit_loglog_slope
from core.cell_homogenization import (energy_form_tensor, homogenized_tensor, solve_correctors,
                                      tensor_delta_sweep)
from core.coefficients import ContrastWeight, validate_structure
from core.eigensolve import EigenRequest, smallest_eigenpairs
from core.exceptions import NumericalError, PoleError, ValidationError, WindowError
from core.fem import assemble_cell_operator, assemble_fine_operator
from core.geometry import build_epsilon_domain, build_epsilon_lattice, build_unit_cell_grid
from core.inclusion_spectrum import bloch_spectrum, compute_inclusion_spectrum
from core.limit_spectrum import (BLOCH, BetaFunction, beta_eval, gamma_eval_oracle, limit_eta,
                                 max_intervals, residual_roots, two_scale_dense_oracle,
                                 two_scale_galerkin_oracle)
from core.resolvent import resolvent_gap_norm
from core.unfolding import estimate_norm_bounds, sine_family
from experiments.config import ExperimentConfig, load_config, parse_seed, resolve_threads
from experiments.persistence import ResultWriter, RunLedger, build_header
from experiments.regime_study import RegimeAnalyzer
from experiments.sweep_engine import TheoremSweepEngine, homogenized_dirichlet_eigenvalues
from monitoring.alerts import get_alert_manager
from monitoring.audit import configure_audit_log, log_event, log_stage_failure

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
ORACLE_RTOL = 1e-6


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


@dataclass
class CommandContext:
    cfg: ExperimentConfig
    writer: ResultWriter
    ledger: RunLedger
    threads: int


# --- subcommands -----------------------------------------------------------------

def _cell_delta(cfg: ExperimentConfig) -> float:
    if cfg.cell.delta is not None:
        return cfg.cell.delta
    if cfg.contrast.law == "fixed":
        return float(cfg.contrast.delta)
    return 1.0


def cmd_cell(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    geom = cfg.geometry.build()
    A = cfg.coefficients.build(geom.dim)
    grid_Y = build_unit_cell_grid(geom, cfg.cell.resolution)
    delta = _cell_delta(cfg)
    validation = validate_structure(A, cfg.cell.validation_samples, directions=8, seed=cfg.seed)
    chi = solve_correctors(grid_Y, A, delta, method=cfg.cell.solver, rtol=cfg.cell.rtol, threads=ctx.threads)
    tensor = homogenized_tensor(grid_Y, A, delta, chi)
    energy = energy_form_tensor(grid_Y, A, delta, chi)
    ctx.writer.write_json("tensor.json", {
        "tensor": tensor.to_dict(),
        "energy_form_gap": float(np.abs(energy - tensor.entries).max()),
        "corrector_means": chi.means(grid_Y),
        "corrector_iterations": chi.iterations,
        "converged": chi.converged,
        "validation": validation.to_dict(),
    })
    if cfg.cell.deltas:
        tensors = tensor_delta_sweep(grid_Y, A, sorted(cfg.cell.deltas), method=cfg.cell.solver,
                                     rtol=cfg.cell.rtol, threads=ctx.threads)
        rows = [{"delta": t.delta, **{"a" + k.replace(",", ""): v for k, v in t.to_dict()["entries"].items()}}
                for t in tensors]
        ctx.writer.write_csv("delta_sweep.csv", pd.DataFrame(rows))
    if cfg.cell.export_matrix:
        assemble_cell_operator(grid_Y, A, delta).to_matrix_market(ctx.writer.out_dir / "matrices", "cell")
    return EXIT_OK if chi.converged else EXIT_NUMERICAL


def cmd_inclusion(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    engine = TheoremSweepEngine(cfg, ctx.threads)
    spectrum = engine.spectrum
    ctx.writer.write_csv("inclusion_spectrum.csv", spectrum.to_frame())
    ctx.writer.write_json("inclusion_summary.json", {
        "theta": spectrum.theta, "modes": spectrum.count, "complete": spectrum.complete,
        "nonzero_mean": int(spectrum.nonzero_mask.sum()), "parseval_mass": spectrum.parseval_mass,
        "tail_mass": spectrum.tail_mass, "max_residual": float(np.max(spectrum.residuals)),
        "converged": spectrum.converged,
    })
    return EXIT_OK if spectrum.converged else EXIT_NUMERICAL


def _beta_samples(bf: BetaFunction, samples: List[float]) -> pd.DataFrame:
    if not samples:
        edges = [bf.pole(i) for i in range(min(bf.n_poles, 3) + 1)]
        samples = [0.5 * (a + b) for a, b in zip(edges, edges[1:])]
    rows = []
    for lam in samples:
        row = {"lambda": lam, "value": np.nan, "lower": np.nan, "upper": np.nan,
               "derivative": np.nan, "status": "ok"}
        try:
            bv = beta_eval(bf, lam)
            row.update(value=bv.value, lower=bv.lower, upper=bv.upper, derivative=bf.derivative(lam))
        except (PoleError, WindowError) as exc:
            row["status"] = type(exc).__name__
        rows.append(row)
    return pd.DataFrame(rows)


def cmd_limit(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    lc = cfg.limit
    engine = TheoremSweepEngine(cfg, ctx.threads)
    spectrum = engine.spectrum
    eps = 1.0 / lc.epsilon
    delta = eps ** 2 / lc.kappa
    bf = BetaFunction.from_spectrum(spectrum, lc.kappa)
    lattice = build_epsilon_lattice(cfg.geometry.dim, lc.epsilon)
    bloch = bloch_spectrum(spectrum, lattice, lc.kappa, rel_gap=cfg.tolerances.cluster_gap)
    thetas = homogenized_dirichlet_eigenvalues(
        engine.tensor(delta), cfg.eigen.homogenized_resolution or lc.epsilon * cfg.subcells,
        lc.thetas, seed=cfg.seed)
    intervals = min(lc.intervals, max_intervals(bf))
    if intervals < 1:
        raise ValidationError(f"{bf.n_poles} nonzero-mean modes resolve no pole interval; raise inclusion_modes")
    roots = residual_roots(bf, thetas, intervals, epsilon=eps, threads=ctx.threads)
    report = limit_eta(bloch, roots, bloch_floor=bloch.lower_bound(spectrum))

    ctx.writer.write_csv("beta_samples.csv", _beta_samples(bf, lc.samples))
    ctx.writer.write_csv("residual_roots.csv", roots.to_frame())
    ctx.writer.write_csv("limit_eta.csv", report.to_frame())
    flagged = sum(e.flagged for e in roots.entries)
    ctx.writer.write_json("limit_summary.json", {
        "kappa": lc.kappa, "epsilon": eps, "delta": delta, "window_cap": bf.window_cap,
        "tail_mass": bf.tail_mass, "thetas": thetas, "trusted_floor": report.trusted_floor,
        "intervals": intervals, "flagged_roots": flagged, "disclaimer": report.disclaimer,
    })
    return EXIT_OK if flagged == 0 else EXIT_NUMERICAL


def cmd_fine(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    geom = cfg.geometry.build()
    A = cfg.coefficients.build(geom.dim)
    rows = []
    converged = True
    for n in cfg.epsilons:
        eps = 1.0 / n
        delta = cfg.contrast.delta_for(eps)
        _, grid = build_epsilon_domain(geom, eps, cfg.subcells)
        op = assemble_fine_operator(grid, A, ContrastWeight(delta, eps), eps, ctx.threads)
        result = smallest_eigenpairs(EigenRequest(op, cfg.eigen.count, tolerance=cfg.eigen.tolerance,
                                                  seed=cfg.seed, method=cfg.eigen.method))
        converged &= result.converged
        for i, (lam, res) in enumerate(zip(result.values, result.residuals)):
            rows.append({"epsilon": eps, "delta": delta, "i": i + 1, "lambda": lam, "eta": 1.0 / lam,
                         "residual": res})
        ctx.ledger.log_stage("fine", "ok", {"epsilon": eps, "dimension": op.dimension})
    ctx.writer.write_csv("fine_eigenvalues.csv", pd.DataFrame(rows))
    return EXIT_OK if converged else EXIT_NUMERICAL


def cmd_unfold_check(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    uc = cfg.unfolding
    dim = cfg.geometry.dim
    report = estimate_norm_bounds(sine_family(dim, uc.max_frequency), uc.epsilons, uc.subcells, dim)
    frame = report.to_frame()
    ctx.writer.write_csv("unfolding_rates.csv", frame)
    ctx.writer.write_json("unfolding_slopes.json", {"slopes": report.slopes_dict(), "family": report.family})
    long = frame.melt(id_vars="epsilon", var_name="series", value_name="y")
    ctx.writer.write_plot("unfolding_plot.csv", long["epsilon"], long["y"], long["series"])
    return EXIT_OK


def cmd_sweep(ctx: CommandContext) -> int:
    engine = TheoremSweepEngine(ctx.cfg, ctx.threads)
    report = engine.run()
    ctx.writer.write_csv("rates.csv", report.to_frame())
    ctx.writer.write_json("slopes.json", {"k": report.k, "slopes": report.slopes_dict(),
                                          "failures": {f"{e:.12g}": msg for e, msg in report.failures.items()}})
    ctx.writer.write_json("runtimes.json", report.runtimes())
    x, y, series = report.plot_rows()
    ctx.writer.write_plot("rates_plot.csv", x, y, series)
    for stage in report.stages:
        ctx.ledger.log_stage("sweep", "ok" if stage.ok else "failed",
                             {"epsilon": stage.epsilon, "paired": int(stage.errors.size), "failure": stage.failure})
    return EXIT_OK if not report.failures else EXIT_NUMERICAL


def cmd_regimes(ctx: CommandContext) -> int:
    report = RegimeAnalyzer(ctx.cfg, ctx.threads).run()
    ctx.writer.write_csv("regimes.csv", report.to_frame())
    ctx.writer.write_json("regimes.json", report.summary())
    return EXIT_OK if all(r.failure is None for r in report.results) else EXIT_NUMERICAL


def cmd_oracle(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    oc = cfg.oracle
    geom = cfg.geometry.build()
    A = cfg.coefficients.build(geom.dim)
    grid_Y = build_unit_cell_grid(geom, oc.y_resolution)
    lattice = build_epsilon_lattice(geom.dim, oc.n)
    eps = lattice.epsilon
    delta = eps ** 2 / oc.kappa

    result = two_scale_dense_oracle(lattice, grid_Y, A, delta)
    spectrum = compute_inclusion_spectrum(grid_Y, A, count=None)
    bloch = bloch_spectrum(spectrum, lattice, oc.kappa)
    bf = BetaFunction.from_spectrum(spectrum, oc.kappa)
    roots = residual_roots(bf, result.cell_thetas, max_intervals(bf), epsilon=eps)
    report = limit_eta(bloch, roots)

    values, vectors = result.nonzero()
    # θ̃_j lists every compressed mode, so the whole η list is comparable here
    predicted = report.eta()
    labels = report.labels()
    count = min(values.size, predicted.size)
    rel = np.abs(values[:count] - predicted[:count]) / np.abs(predicted[:count])
    bloch_cols = [i for i in range(count) if labels[i] == BLOCH]
    y_mean_max = float(np.abs(result.y_means(vectors[:, bloch_cols])).max()) if bloch_cols else 0.0

    dirichlet = homogenized_dirichlet_eigenvalues(result.tensor, oc.n * oc.y_resolution,
                                                  result.cell_thetas.size, seed=cfg.seed)
    shifted = residual_roots(bf, dirichlet, max_intervals(bf), epsilon=eps)
    shift_rows = [{"i": a.i, "j": a.j, "root_cell_theta": a.value, "root_dirichlet_theta": b.value,
                   "shift": abs(a.value - b.value), "defect_scale": b.defect_scale}
                  for a, b in zip(roots.entries, shifted.entries)]

    galerkin = two_scale_galerkin_oracle(lattice, grid_Y, A, delta)
    galerkin_bloch = np.sort(galerkin.branch_values(BLOCH))
    expected_bloch = np.sort(bloch.expanded())
    bloch_matched = galerkin_bloch.size == expected_bloch.size and bool(
        np.allclose(galerkin_bloch, expected_bloch, rtol=ORACLE_RTOL, atol=0.0))
    gaps = galerkin.residual_gaps(limit_eta(bloch, shifted, bloch_floor=bloch.lower_bound(spectrum)))

    rng = np.random.default_rng(cfg.seed)
    gamma_rows = []
    poles = bf.poles()
    for lam in rng.uniform(0.05, 1.5, oc.gamma_samples) * (poles[0] if poles.size else 1.0):
        try:
            bv = beta_eval(bf, lam)
            gamma = gamma_eval_oracle(oc.kappa, 1.0 / lam, grid_Y, A)
        except (PoleError, WindowError):
            continue
        gamma_rows.append({"lambda": lam, "beta": bv.value, "gamma": gamma, "gap": abs(gamma - bv.value)})

    ctx.writer.write_csv("oracle_spectrum.csv", pd.DataFrame({
        "i": np.arange(1, count + 1), "oracle": values[:count], "predicted": predicted[:count],
        "branch": labels[:count], "relative_error": rel}))
    ctx.writer.write_csv("oracle_root_shift.csv", pd.DataFrame(shift_rows))
    ctx.writer.write_csv("oracle_gamma.csv", pd.DataFrame(gamma_rows))
    ctx.writer.write_csv("oracle_residual_gap.csv", gaps)
    matched = values.size == predicted.size and bool(np.all(rel <= ORACLE_RTOL))
    gap_values = gaps["relative_gap"].to_numpy() if len(gaps) else np.empty(0)
    ctx.writer.write_json("oracle.json", {
        "nonzero_oracle": int(values.size), "predicted": int(predicted.size),
        "zero_eigenvalues": int(result.eigen.count - values.size),
        "max_relative_error": float(rel.max(initial=0.0)), "bloch_y_mean_max": y_mean_max,
        "matched": matched, "cell_thetas": result.cell_thetas, "dirichlet_thetas": dirichlet,
        "galerkin_dimension": galerkin.dimension, "galerkin_bloch_matched": bloch_matched,
        "galerkin_leading_gap": float(gap_values[0]) if gap_values.size else None,
        "galerkin_max_gap": float(gap_values.max(initial=0.0)),
    })
    if not bloch_matched:
        get_alert_manager().send_numerical_alert("GALERKIN_BLOCH_MISMATCH", {
            "oracle": int(galerkin_bloch.size), "predicted": int(expected_bloch.size)})
    return EXIT_OK if matched and bloch_matched else EXIT_NUMERICAL


def cmd_resolvent(ctx: CommandContext) -> int:
    cfg = ctx.cfg
    geom = cfg.geometry.build()
    A = cfg.coefficients.build(geom.dim)
    rows = []
    for n in cfg.epsilons:
        eps = 1.0 / n
        delta = cfg.contrast.delta_for(eps)
        gap = resolvent_gap_norm(geom, A, delta, eps, cfg.subcells, threads=ctx.threads, seed=cfg.seed)
        rows.append(gap.to_dict())
    frame = pd.DataFrame(rows)
    ctx.writer.write_csv("resolvent.csv", frame)
    fit = fit_loglog_slope(frame["epsilon"], frame["norm"])
    ctx.writer.write_json("resolvent_slope.json", {"slope": fit.to_dict()})
    return EXIT_OK


COMMANDS: Dict[str, tuple] = {
    "cell": (cmd_cell, "correctors and the homogenized tensor"),
    "inclusion": (cmd_inclusion, "Dirichlet spectrum of the inclusion"),
    "limit": (cmd_limit, "beta function, residual roots and the merged limit spectrum"),
    "fine": (cmd_fine, "eigenvalues of the fine high-contrast operator"),
    "unfold-check": (cmd_unfold_check, "unfolding operator norm-bound rates"),
    "sweep": (cmd_sweep, "fine vs limit eigenvalue convergence sweep"),
    "regimes": (cmd_regimes, "regime comparison for delta = eps^p"),
    "oracle": (cmd_oracle, "dense two-scale cross-checks"),
    "resolvent": (cmd_resolvent, "resolvent gap norm over the epsilon list"),
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="YAML config file")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", metavar="N", type=int, default=argparse.SUPPRESS,
                        help="worker threads (fallback: HOMOGLAB_THREADS)")
    common.add_argument("--seed", metavar="HEX", type=parse_seed, default=argparse.SUPPRESS,
                        help="random seed as a hex number")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="homoglab", description="High-contrast periodic homogenization lab",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, help=help_text, parents=[common])
    return parser


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (None, 0) else EXIT_VALIDATION
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION

    handler: Callable[[CommandContext], int] = COMMANDS[args.command][0]
    try:
        overrides = {}
        if hasattr(args, "seed"):
            overrides["seed"] = args.seed
        if hasattr(args, "out"):
            overrides["output_dir"] = args.out
        cfg = load_config(getattr(args, "config", None), overrides)
        threads = resolve_threads(getattr(args, "threads", None), cfg)
        out_dir = Path(cfg.output_dir)
        configure_audit_log(out_dir / "audit.log")
        writer = ResultWriter(out_dir, build_header(cfg, args.command))
        ledger = RunLedger(out_dir / "runs.jsonl")
        log_event("CLI", {"command": args.command, "config": getattr(args, "config", None),
                          "threads": threads, "out": str(out_dir)})
        status = handler(CommandContext(cfg=cfg, writer=writer, ledger=ledger, threads=threads))
        alerts = get_alert_manager().drain()
        if alerts:
            writer.write_json("alerts.json", {"alerts": alerts})
        ledger.log_stage(args.command, "ok" if status == EXIT_OK else "degraded",
                         {"outputs": [p.name for p in writer.written]})
        return status
    except ValidationError as exc:
        log_stage_failure(args.command, exc)
        print(f"homoglab {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        log_stage_failure(args.command, exc)
        print(f"homoglab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
