#!/usr/bin/env python
"""
Unfolding tests: exact grid identities and norm-bound decay rates
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.exceptions import GridCompatibilityError, ValidationError
from core.unfolding import (TwoScaleGridFunction, UnfoldingGrid, average, cell_means, constant, embed,
                            estimate_norm_bounds, project, sine_family, sine_product, unfold, y_mean)


@pytest.fixture
def grid():
    return UnfoldingGrid(dim=2, n=4, subcells=3)


@pytest.fixture
def u(grid):
    return np.random.default_rng(11).standard_normal(grid.shape)


def test_split_merge_roundtrip(grid, u):
    np.testing.assert_array_equal(grid.merge(grid.split(u)), u)
    assert grid.split(u).shape == (16, 9)


def test_unfolding_is_an_isometry(grid, u):
    phi = unfold(u, grid)
    assert phi.norm() == pytest.approx(grid.l2_norm(u), rel=1e-12)
    assert phi.quadrature_norm() == pytest.approx(phi.norm(), rel=1e-12)


def test_average_inverts_unfolding(grid, u):
    np.testing.assert_allclose(average(unfold(u, grid)), u, atol=1e-12)


def test_average_is_adjoint_of_unfolding(grid, u):
    phi = TwoScaleGridFunction.random(grid, np.random.default_rng(5))
    assert unfold(u, grid).inner(phi) == pytest.approx(grid.inner(u, average(phi)), rel=1e-12)


def test_projection_is_idempotent(grid):
    phi = TwoScaleGridFunction.random(grid, np.random.default_rng(6))
    once = project(phi)
    np.testing.assert_allclose(project(once).values, once.values, atol=1e-12)
    assert once.norm() <= phi.norm() * (1 + 1e-12)


def test_embedding_and_y_mean(grid, u):
    np.testing.assert_allclose(y_mean(embed(u, grid)), u, atol=1e-12)
    means = cell_means(u, grid)
    assert means.shape == (16,)
    np.testing.assert_allclose(cell_means(average(embed(u, grid)), grid), means, atol=1e-12)


def test_shape_mismatch(grid):
    with pytest.raises(GridCompatibilityError):
        unfold(np.zeros((5, 5)), grid)
    with pytest.raises(GridCompatibilityError):
        TwoScaleGridFunction(grid, np.zeros((16, 9, 4)))


def test_sine_h1_norm():
    f = sine_product((1, 1))
    assert f.h1_norm(2) == pytest.approx(np.sqrt(0.25 + np.pi ** 2 / 2), rel=1e-10)


def test_norm_bound_rates():
    report = estimate_norm_bounds(sine_family(2, 1), [4, 8, 16, 32], subcells=8, dim=2)
    slopes = report.slopes_dict()
    for name in ("r_a", "r_b", "r_c"):
        assert slopes[name]["slope"] >= 0.9, name
    assert np.all(np.diff(report.r_c) < 0)


def test_constants_are_reproduced_exactly():
    report = estimate_norm_bounds([constant(1.0, 2)], [4, 8], subcells=4, dim=2)
    assert max(report.r_b) <= 1e-12
    assert max(report.r_c) <= 1e-12
    assert max(report.r_a) <= 1e-12


def test_norm_bounds_need_a_family():
    with pytest.raises(ValidationError):
        estimate_norm_bounds([], [4, 8])
