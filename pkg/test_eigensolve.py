#!/usr/bin/env python
"""
Eigensolver tests: iterative vs dense agreement, clusters and guards
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.coefficients import layered
from core.eigensolve import (EigenRequest, cluster_values, dense_oracle_eigens, eigenpairs_near,
                             smallest_eigenpairs)
from core.exceptions import ValidationError
from core.fem import SparseSymmetricOperator, assemble_cell_operator, assemble_homogenized_operator
from core.geometry import PeriodicGeometry, StructuredGrid, build_unit_cell_grid


def dirichlet_operator(resolution=16, tensor=None):
    grid = StructuredGrid(dim=2, resolution=(resolution, resolution), length=(1.0, 1.0), periodic=False)
    return assemble_homogenized_operator(grid, np.diag([1.0, 2.0]) if tensor is None else tensor)


@pytest.mark.parametrize("method", ["shift-invert", "lobpcg"])
def test_iterative_matches_dense_oracle(method):
    op = dirichlet_operator()
    dense = dense_oracle_eigens(op)
    result = smallest_eigenpairs(EigenRequest(op, 5, tolerance=1e-8, method=method))
    assert result.converged
    np.testing.assert_allclose(result.values, dense.values[:5], rtol=1e-6)
    gram = result.vectors.T @ op.mass @ result.vectors
    np.testing.assert_allclose(gram, np.eye(5), atol=1e-8)


def test_results_are_reproducible():
    op = dirichlet_operator()
    a = smallest_eigenpairs(EigenRequest(op, 4, seed=7))
    b = smallest_eigenpairs(EigenRequest(op, 4, seed=7))
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.vectors, b.vectors)


def test_periodic_operator_drops_constant_mode():
    grid_Y = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 16)
    op = assemble_cell_operator(grid_Y, layered(2), 1.0)
    result = smallest_eigenpairs(EigenRequest(op, 4))
    dense = dense_oracle_eigens(op)
    assert result.values[0] > 1.0
    np.testing.assert_allclose(result.values, dense.values[:4], rtol=1e-6)


def test_psd_update_never_lowers_eigenvalues():
    op = dirichlet_operator(8)
    base = dense_oracle_eigens(op).values[:5]
    rng = np.random.default_rng(3)
    for _ in range(3):
        v = rng.standard_normal(op.dimension)
        K = op.stiffness.toarray() + np.outer(v, v)
        updated = dense_oracle_eigens(SparseSymmetricOperator.from_matrices(K, op.mass)).values[:5]
        assert np.all(updated >= base * (1 - 1e-12))


def test_eigenpairs_near_a_shift():
    op = dirichlet_operator()
    dense = dense_oracle_eigens(op).values
    target = dense[10]
    near = eigenpairs_near(EigenRequest(op, 3, shift=target * 1.001))
    assert np.min(np.abs(near.values - target)) <= 1e-8 * target
    with pytest.raises(ValidationError):
        eigenpairs_near(EigenRequest(op, 3))


def test_request_guards():
    op = dirichlet_operator(8)
    with pytest.raises(ValidationError):
        smallest_eigenpairs(EigenRequest(op, op.dimension))
    with pytest.raises(ValidationError):
        EigenRequest(op, 0)
    with pytest.raises(ValidationError):
        EigenRequest(op, 2, tolerance=0.5)
    with pytest.raises(ValidationError):
        EigenRequest(op, 2, method="arnoldi")


def test_dense_oracle_cap():
    op = dirichlet_operator(64, np.eye(2))
    with pytest.raises(ValidationError):
        dense_oracle_eigens(op)


def test_cluster_values_groups_near_multiplicities():
    clusters = cluster_values(np.array([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0 + 1e-8]))
    assert [c.size for c in clusters] == [2, 1, 2]
    assert clusters[2].start == 3
    assert cluster_values(np.empty(0)) == []


def test_square_laplacian_degenerate_pair():
    op = dirichlet_operator(32, np.eye(2))
    result = smallest_eigenpairs(EigenRequest(op, 3, tolerance=1e-10))
    sizes = [c.size for c in result.clusters()]
    assert sizes == [1, 2]
