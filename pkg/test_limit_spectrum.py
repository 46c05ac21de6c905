#!/usr/bin/env python
"""
Limit spectrum tests: the beta function, residual roots, merging and the two-scale oracle
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import math

import numpy as np
import pytest

from core.coefficients import identity
from core.exceptions import PoleError, ValidationError, WindowError
from core.eigensolve import EigenRequest, smallest_eigenpairs
from core.fem import assemble_homogenized_operator
from core.geometry import PeriodicGeometry, StructuredGrid, build_epsilon_lattice, build_unit_cell_grid
from core.inclusion_spectrum import bloch_spectrum, compute_inclusion_spectrum
from core.limit_spectrum import (BLOCH, RESIDUAL, BetaFunction, beta_eval, gamma_eval_oracle, limit_eta,
                                 max_intervals, residual_roots, two_scale_dense_oracle,
                                 two_scale_galerkin_oracle)

THETAS = [5.0, 12.0, 30.0]


@pytest.fixture(scope="module")
def geom():
    return PeriodicGeometry.centered_square(0.5)


@pytest.fixture(scope="module")
def grid_Y(geom):
    return build_unit_cell_grid(geom, 16)


@pytest.fixture(scope="module")
def complete(grid_Y):
    return compute_inclusion_spectrum(grid_Y, identity(2), count=None)


@pytest.fixture(scope="module")
def partial(grid_Y):
    return compute_inclusion_spectrum(grid_Y, identity(2), count=8)


def interval_points(bf, i, count=5):
    lo, hi = bf.pole(i), min(bf.pole(i + 1), bf.window_cap)
    if math.isinf(hi):
        hi = lo + 100.0
    return lo + (hi - lo) * np.linspace(0.05, 0.95, count)


def test_beta_is_increasing_with_slope_bound(complete):
    bf = BetaFunction.from_spectrum(complete, kappa=1.0)
    assert bf(0.0) == 0.0
    for i in range(4):
        for lam in interval_points(bf, i):
            assert bf.derivative(lam) >= 1.0 - bf.theta - 1e-6


def test_poles_and_window(complete, partial):
    bf = BetaFunction.from_spectrum(complete, kappa=2.0)
    np.testing.assert_allclose(bf.poles(), 1.0 / (2.0 * complete.beta))
    assert bf.pole(0) == 0.0 and bf.pole(bf.n_poles + 1) == math.inf
    assert bf.window_cap == math.inf
    with pytest.raises(PoleError) as info:
        beta_eval(bf, bf.pole(1))
    assert info.value.pole == pytest.approx(bf.pole(1))

    truncated = BetaFunction.from_spectrum(partial, kappa=2.0)
    assert truncated.window_cap == pytest.approx(0.9 / (2.0 * partial.scaled_inv_bound()))
    with pytest.raises(WindowError):
        beta_eval(truncated, 1.01 * truncated.window_cap)
    with pytest.raises(ValidationError):
        BetaFunction.from_spectrum(complete, kappa=-1.0)


def test_complete_beta_matches_resolvent_oracle(complete, grid_Y):
    kappa = 1.0
    bf = BetaFunction.from_spectrum(complete, kappa)
    rng = np.random.default_rng(2)
    for lam in rng.uniform(0.05, 2.5, 20) * bf.pole(1):
        try:
            value = beta_eval(bf, lam)
        except PoleError:
            continue
        gamma = gamma_eval_oracle(kappa, 1.0 / lam, grid_Y, identity(2))
        assert value.lower == value.upper
        assert gamma == pytest.approx(value.value, rel=1e-8, abs=1e-10)


def test_truncated_enclosure_contains_oracle(partial, grid_Y):
    kappa = 1.0
    bf = BetaFunction.from_spectrum(partial, kappa)
    hi = min(bf.window_cap, bf.pole(bf.n_poles)) * 0.99
    for lam in np.linspace(0.02, 1.0, 20) * hi:
        try:
            value = beta_eval(bf, lam)
        except PoleError:
            continue
        gamma = gamma_eval_oracle(kappa, 1.0 / lam, grid_Y, identity(2))
        assert value.contains(gamma, tol=1e-9 * (1 + abs(gamma)))


def test_gamma_oracle_rejects_singular_point(complete, grid_Y):
    with pytest.raises(PoleError):
        gamma_eval_oracle(1.0, 1.0 / complete.mu[0], grid_Y, identity(2))


def test_roots_one_per_interval(complete):
    bf = BetaFunction.from_spectrum(complete, kappa=1.0)
    table = residual_roots(bf, THETAS, intervals=3, epsilon=0.125)
    assert len(table.entries) == 9
    assert not any(e.flagged for e in table.entries)
    for e in table.entries:
        assert bf.pole(e.i) < e.value < bf.pole(e.i + 1)
        assert abs(bf(e.value) - e.theta) <= 1e-10 * (1 + e.theta)
        assert e.defect_bound == pytest.approx(0.125 * abs(1 - e.value / e.theta))
    for i in range(3):
        values = [e.value for e in table.entries if e.i == i]
        assert np.all(np.diff(values) > 0)
    frame = table.to_frame()
    assert "theorem3_defect_bound" in frame.columns


def test_threaded_roots_match_serial(complete):
    bf = BetaFunction.from_spectrum(complete, kappa=1.0)
    serial = residual_roots(bf, THETAS, intervals=2)
    threaded = residual_roots(bf, THETAS, intervals=2, threads=3)
    assert [e.value for e in serial.entries] == [e.value for e in threaded.entries]


def test_small_kappa_recovers_homogenized_values(complete):
    bf = BetaFunction.from_spectrum(complete, kappa=1e-6)
    table = residual_roots(bf, THETAS, intervals=1)
    np.testing.assert_allclose([e.value for e in table.entries], THETAS, rtol=1e-4)


def test_large_kappa_last_interval(complete):
    bf = BetaFunction.from_spectrum(complete, kappa=1e6)
    n = max_intervals(bf)
    table = residual_roots(bf, THETAS, intervals=n)
    last = [e.value for e in table.entries if e.i == n - 1]
    expected = np.asarray(THETAS) / (1.0 - bf.theta + bf.tail_mass)
    np.testing.assert_allclose(last, expected, rtol=1e-3)


def test_root_guards(complete, partial):
    bf = BetaFunction.from_spectrum(complete, kappa=1.0)
    with pytest.raises(ValidationError):
        residual_roots(bf, [3.0, 2.0], intervals=1)
    with pytest.raises(ValidationError):
        residual_roots(bf, [-1.0], intervals=1)
    with pytest.raises(ValidationError):
        residual_roots(BetaFunction.from_spectrum(complete, kappa=0.0), THETAS, intervals=1)
    truncated = BetaFunction.from_spectrum(partial, kappa=1.0)
    assert max_intervals(truncated) == truncated.n_poles - 1
    with pytest.raises(ValidationError):
        residual_roots(truncated, THETAS, intervals=truncated.n_poles)


def test_merged_spectrum_is_decreasing(complete):
    kappa = 1.0
    lattice = build_epsilon_lattice(2, 4)
    bloch = bloch_spectrum(complete, lattice, kappa)
    bf = BetaFunction.from_spectrum(complete, kappa)
    roots = residual_roots(bf, THETAS, intervals=2, epsilon=0.25)
    report = limit_eta(bloch, roots, bloch_floor=bloch.lower_bound(complete))
    eta = report.eta()
    assert np.all(np.diff(eta) <= 0)
    assert eta.size == bloch.expanded().size + 6
    labels = report.labels()
    assert labels.count(RESIDUAL) == 6 and labels.count(BLOCH) == bloch.expanded().size
    assert np.all(report.trusted_eta() >= report.trusted_floor)
    assert set(report.to_frame()["branch"]) == {BLOCH, RESIDUAL}

    other = bloch_spectrum(complete, lattice, 2.0)
    with pytest.raises(ValidationError):
        limit_eta(other, roots)


def test_cell_compressed_oracle_agrees_with_limit_spectrum(geom):
    # residual roots here use the compressed θ̃_j, so agreement checks the root finder and merge only
    grid_Y = build_unit_cell_grid(geom, 8)
    lattice = build_epsilon_lattice(2, 2)
    kappa = 1.0
    delta = lattice.epsilon ** 2 / kappa
    result = two_scale_dense_oracle(lattice, grid_Y, identity(2), delta)
    values, vectors = result.nonzero()

    spectrum = compute_inclusion_spectrum(grid_Y, identity(2), count=None)
    bloch = bloch_spectrum(spectrum, lattice, kappa)
    bf = BetaFunction.from_spectrum(spectrum, kappa)
    roots = residual_roots(bf, result.cell_thetas, max_intervals(bf))
    report = limit_eta(bloch, roots)
    labels = report.labels()

    assert labels.count(BLOCH) == 24
    assert labels.count(RESIDUAL) == 16
    assert result.eigen.count - values.size == 216
    np.testing.assert_allclose(values, report.eta(), rtol=1e-7)

    bloch_cols = [k for k, label in enumerate(labels) if label == BLOCH]
    assert np.abs(result.y_means(vectors[:, bloch_cols])).max() <= 1e-8


def _dirichlet_report(oracle, lattice, spectrum, resolution):
    """Limit spectrum built from the Dirichlet θ_j of the oracle's own x-grid."""
    grid_Omega = StructuredGrid(dim=2, resolution=(resolution, resolution), length=(1.0, 1.0), periodic=False)
    op = assemble_homogenized_operator(grid_Omega, oracle.tensor)
    thetas = smallest_eigenpairs(EigenRequest(op, 4)).values
    bloch = bloch_spectrum(spectrum, lattice, oracle.kappa)
    bf = BetaFunction.from_spectrum(spectrum, oracle.kappa)
    roots = residual_roots(bf, thetas, 1, epsilon=lattice.epsilon)
    return bloch, limit_eta(bloch, roots, bloch_floor=bloch.lower_bound(spectrum))


def q1_dirichlet_eigenvalue(mode, length, h):
    kh = mode * math.pi * h / length
    return 6.0 / h ** 2 * (1.0 - math.cos(kh)) / (2.0 + math.cos(kh))


def test_galerkin_oracle_bloch_branch_is_exact(geom):
    grid_Y = build_unit_cell_grid(geom, 8)
    lattice = build_epsilon_lattice(2, 2)
    spectrum = compute_inclusion_spectrum(grid_Y, identity(2), count=None)
    oracle = two_scale_galerkin_oracle(lattice, grid_Y, identity(2), lattice.epsilon ** 2)
    assert oracle.dimension == 15 * 15 + 4 * 9
    bloch, _ = _dirichlet_report(oracle, lattice, spectrum, 16)

    measured = oracle.branch_values(BLOCH)
    assert measured.size == bloch.expanded().size == 24
    np.testing.assert_allclose(np.sort(measured), np.sort(bloch.expanded()), rtol=1e-8)

    # leading cluster: modes (1,2) and (2,1) in each of the four cells
    leading = bloch.entries[0]
    assert leading.multiplicity == 8
    np.testing.assert_allclose(measured[:8], leading.value, rtol=1e-8)
    discrete = q1_dirichlet_eigenvalue(1, 0.5, 0.125) + q1_dirichlet_eigenvalue(2, 0.5, 0.125)
    assert discrete == pytest.approx(41.55 + 192.0, rel=1e-3)
    assert leading.value == pytest.approx(1.0 / discrete, rel=1e-8)
    assert leading.value == pytest.approx(1.0 / (20.0 * math.pi ** 2), rel=0.2)


def test_galerkin_oracle_residual_gap_shrinks_with_epsilon(geom):
    grid_Y = build_unit_cell_grid(geom, 8)
    spectrum = compute_inclusion_spectrum(grid_Y, identity(2), count=None)
    gaps = {}
    for n in (2, 4):
        lattice = build_epsilon_lattice(2, n)
        oracle = two_scale_galerkin_oracle(lattice, grid_Y, identity(2), lattice.epsilon ** 2)
        _, report = _dirichlet_report(oracle, lattice, spectrum, 8 * n)
        table = oracle.residual_gaps(report)
        assert len(table) == 4
        gaps[n] = float(table["relative_gap"].iloc[0])
    assert gaps[2] <= 0.2
    assert gaps[4] < gaps[2]


def test_galerkin_oracle_guards(geom):
    grid_Y = build_unit_cell_grid(geom, 8)
    with pytest.raises(ValidationError):
        two_scale_galerkin_oracle(build_epsilon_lattice(2, 3), grid_Y, identity(2), 1.0 / 9, homogenized_resolution=16)
    with pytest.raises(ValidationError):
        two_scale_galerkin_oracle(build_epsilon_lattice(2, 8), grid_Y, identity(2), 1.0 / 64)
