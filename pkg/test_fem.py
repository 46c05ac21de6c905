#!/usr/bin/env python
"""
Finite element tests: assembly, constraints and linear solves
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.cell_homogenization import corrector_rhs
from core.coefficients import ContrastWeight, identity, layered
from core.eigensolve import EigenRequest, dense_oracle_eigens, smallest_eigenpairs
from core.exceptions import ValidationError
from core.fem import (Constraint, FactorizedSolver, assemble_cell_operator, assemble_fine_operator,
                      assemble_homogenized_operator, assemble_inclusion_operator, assemble_mass,
                      node_integrals, solve)
from core.geometry import PeriodicGeometry, StructuredGrid, build_epsilon_domain, build_unit_cell_grid


def unit_square(resolution):
    return StructuredGrid(dim=2, resolution=(resolution, resolution), length=(1.0, 1.0), periodic=False)


@pytest.fixture
def geom():
    return PeriodicGeometry.centered_square(0.5)


def test_mass_integrates_area():
    grid = unit_square(8)
    M = assemble_mass(grid)
    ones = np.ones(grid.n_nodes)
    assert ones @ M @ ones == pytest.approx(1.0)
    assert node_integrals(grid).sum() == pytest.approx(1.0)


def test_dirichlet_laplacian_eigenvalues():
    op = assemble_homogenized_operator(unit_square(128), np.eye(2))
    result = smallest_eigenpairs(EigenRequest(op, 3, tolerance=1e-8))
    np.testing.assert_allclose(result.values, np.pi ** 2 * np.array([2.0, 5.0, 5.0]), rtol=1e-2)


def test_fine_operator_is_symmetric(geom):
    _, grid = build_epsilon_domain(geom, 0.5, 8)
    op = assemble_fine_operator(grid, layered(2), ContrastWeight(0.25, 0.5), 0.5)
    assert op.constraint is Constraint.DIRICHLET
    assert op.dimension == 15 * 15
    assert op.symmetry_defect() <= 1e-12


def test_fine_eigenvalues_increase_with_delta(geom):
    _, grid = build_epsilon_domain(geom, 0.5, 8)
    previous = None
    for delta in (0.1, 1.0, 10.0):
        op = assemble_fine_operator(grid, identity(2), ContrastWeight(delta, 0.5), 0.5)
        values = smallest_eigenpairs(EigenRequest(op, 5, tolerance=1e-10)).values
        if previous is not None:
            assert np.all(values >= previous * (1 - 1e-10))
        previous = values


def test_inclusion_operator_dofs(geom):
    grid_Y = build_unit_cell_grid(geom, 8)
    op = assemble_inclusion_operator(grid_Y, identity(2))
    assert op.dimension == 9
    # ∫(Σφ_p)² over interior basis functions stays below |ω|
    assert 0.0 < op.mass.sum() < 0.25
    assert op.symmetry_defect() <= 1e-12


def test_periodic_solve_is_mean_zero_and_methods_agree(geom):
    grid_Y = build_unit_cell_grid(geom, 16)
    A = layered(2)
    op = assemble_cell_operator(grid_Y, A, 0.1)
    rhs = corrector_rhs(grid_Y, A, 0.1)[0, 0]
    cg = solve(op, rhs, method="cg", rtol=1e-12)
    direct = solve(op, rhs, method="direct")
    assert cg.converged
    assert cg.residual <= 1e-10
    np.testing.assert_allclose(cg.solution, direct.solution, atol=1e-9)
    assert abs(node_integrals(grid_Y) @ direct.solution) <= 1e-12


def test_zero_rhs_and_unknown_solver(geom):
    op = assemble_cell_operator(build_unit_cell_grid(geom, 8), identity(2), 1.0)
    result = solve(op, np.zeros(op.dimension))
    assert result.converged and result.iterations == 0
    with pytest.raises(ValidationError):
        solve(op, np.ones(op.dimension), method="gmres")


def test_factorized_solver_needs_dirichlet(geom):
    op = assemble_cell_operator(build_unit_cell_grid(geom, 8), identity(2), 1.0)
    with pytest.raises(ValidationError):
        FactorizedSolver(op)
    hom = assemble_homogenized_operator(unit_square(8), np.eye(2))
    rhs = np.ones((hom.dimension, 2))
    sol = FactorizedSolver(hom).solve(rhs)
    np.testing.assert_allclose(hom.stiffness @ sol, rhs, atol=1e-10)


def test_homogenized_operator_rejects_indefinite_tensor():
    with pytest.raises(ValidationError):
        assemble_homogenized_operator(unit_square(4), np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_dense_oracle_matches_separable_spectrum():
    op = assemble_homogenized_operator(unit_square(8), np.diag([1.0, 4.0]))
    values = dense_oracle_eigens(op).values
    one = assemble_homogenized_operator(StructuredGrid(dim=1, resolution=(8,), length=(1.0,), periodic=False),
                                        np.eye(1))
    lam = dense_oracle_eigens(one).values
    expected = np.sort(np.add.outer(lam, 4.0 * lam).reshape(-1))
    np.testing.assert_allclose(values, expected, rtol=1e-10)


def test_matrix_market_export(tmp_path, geom):
    op = assemble_cell_operator(build_unit_cell_grid(geom, 8), identity(2), 0.5)
    k_path, m_path = op.to_matrix_market(tmp_path, "cell")
    assert k_path.exists() and m_path.exists()
    assert "constraint" in k_path.read_text().splitlines()[1]
