#!/usr/bin/env python
"""
Experiment pipeline tests: convergence sweep and regime study
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from experiments.config import ExperimentConfig
from experiments.regime_study import CRITICAL, SUBCRITICAL, SUPERCRITICAL, RegimeAnalyzer, regime_of
from experiments.sweep_engine import (TheoremSweepEngine, homogenized_dirichlet_eigenvalues,
                                      run_theorem1_sweep)
from core.cell_homogenization import HomogenizedTensor
from monitoring.alerts import get_alert_manager


def small_config(**overrides):
    data = {
        "cell": {"resolution": 8},
        "eigen": {"count": 6, "thetas": 6, "intervals": 2},
        "epsilons": [2],
        "subcells": 8,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_homogenized_eigenvalues_of_identity():
    tensor = HomogenizedTensor(entries=np.eye(2), delta=1.0, dim=2, m=1)
    values = homogenized_dirichlet_eigenvalues(tensor, 64, 3)
    np.testing.assert_allclose(values, np.pi ** 2 * np.array([2.0, 5.0, 5.0]), rtol=1e-2)
    # more values than dimension/4 switch to the dense path
    dense = homogenized_dirichlet_eigenvalues(tensor, 8, 20)
    assert dense.size == 20


def test_single_epsilon_sweep():
    report = run_theorem1_sweep(small_config())
    assert report.failures == {}
    stage = report.stages[0]
    assert stage.kappa == pytest.approx(1.0)
    assert stage.errors.size == 6
    assert np.all(stage.fine_residuals <= 1e-6)
    assert report.slopes == {}
    frame = report.to_frame()
    assert list(frame["status"].unique()) == ["ok"]
    assert set(frame["branch"]) <= {"bloch", "residual"}


def test_sweep_pairs_only_trusted_limit_values():
    # two thetas over two intervals: only the interval-0 roots clear the trusted floor
    cfg = small_config(eigen={"count": 6, "thetas": 2, "intervals": 2})
    alerts = get_alert_manager()
    alerts.drain()
    stage = run_theorem1_sweep(cfg).stages[0]
    assert stage.ok
    assert stage.limit_eta.size == stage.errors.size == 2
    assert np.all(stage.limit_eta >= stage.limit.trusted_floor)
    assert stage.untrusted == stage.limit.eta().size - 2 > 0
    assert stage.labels == ["residual", "residual"]
    assert "LIMIT_TRUST_SHORTFALL" in [a["alert_type"] for a in alerts.drain()]


def test_sweep_is_deterministic():
    a = run_theorem1_sweep(small_config())
    b = run_theorem1_sweep(small_config())
    np.testing.assert_array_equal(a.stages[0].fine_eta, b.stages[0].fine_eta)
    np.testing.assert_array_equal(a.stages[0].limit_eta, b.stages[0].limit_eta)


def test_failed_stage_is_recorded():
    # 100 eigenpairs exceed a quarter of the 225 fine dofs
    cfg = small_config(eigen={"count": 100, "thetas": 6, "intervals": 2})
    engine = TheoremSweepEngine(cfg)
    assert engine.memory_budget()["1/2"]["dofs"] == 15 * 15
    report = engine.run()
    assert not report.stages[0].ok
    assert "ValidationError" in report.failures[0.5]
    assert list(report.to_frame()["status"]) == ["failed"]
    assert report.slopes == {}


def test_regime_classification():
    assert regime_of(1.0) == SUBCRITICAL
    assert regime_of(2.0) == CRITICAL
    assert regime_of(3.5) == SUPERCRITICAL


def test_subcritical_regime_tracks_homogenized_values():
    cfg = small_config(regimes={"powers": [1.0], "epsilon": 2, "count": 4})
    result = RegimeAnalyzer(cfg).run().results[0]
    assert result.failure is None
    assert result.references.size == 4
    assert np.all(np.isfinite(result.relative_gaps))
    assert result.branches == ["homogenized"] * 4


def test_supercritical_references_pair_by_sorted_position():
    cfg = small_config(regimes={"powers": [3.0], "epsilon": 2, "count": 4})
    analyzer = RegimeAnalyzer(cfg)
    report = analyzer.run()
    result = report.results[0]
    assert result.failure is None
    assert result.regime == SUPERCRITICAL
    assert result.references.size == result.fine_values.size == 4
    assert np.all(np.diff(result.references) >= 0)
    assert np.all(np.diff(result.fine_values) >= 0)
    assert set(result.branches) <= {"inclusion", "homogenized"}
    # θ_1/(1-θ) lies below every inclusion value μ_i/κ at κ = 2
    assert result.branches[0] == "homogenized"
    inclusion = np.repeat(analyzer.subcell_spectrum.mu / result.kappa, 4)
    for ref, branch in zip(result.references, result.branches):
        if branch == "inclusion":
            assert np.any(np.isclose(inclusion, ref, rtol=1e-12))
    assert list(report.to_frame()["branch"]) == result.branches


@pytest.mark.slow
def test_sweep_rate():
    cfg = ExperimentConfig.model_validate({"epsilons": [4, 8, 16], "cell": {"resolution": 32}})
    report = run_theorem1_sweep(cfg, threads=2)
    assert report.failures == {}
    assert report.slopes["aggregate"].slope >= 0.45


@pytest.mark.slow
def test_regime_study():
    cfg = ExperimentConfig.model_validate({"cell": {"resolution": 32}})
    report = RegimeAnalyzer(cfg).run()
    by_power = {r.p: r for r in report.results}
    assert all(r.failure is None for r in report.results)
    assert by_power[1.0].max_gap <= 0.1
    assert by_power[1.0].relative_gaps[0] <= 0.05
    cluster = by_power[2.0].cluster
    assert cluster.size == cluster.expected_size
    assert cluster.spread <= 0.05
    assert cluster.mean_gap <= 0.05
    assert set(by_power[2.0].branches) <= {"bloch", "residual"}
    references = by_power[3.0].references
    assert np.all(np.diff(references) >= 0)
    summary = report.summary()
    assert set(summary) == {"p=1", "p=2", "p=3"}
