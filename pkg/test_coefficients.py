#!/usr/bin/env python
"""
Coefficient field tests: built-in fields, validation and contrast weights
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.coefficients import (CoefficientField, ContrastWeight, block_diagonal, checkerboard,
                               contrast_weight_values, from_descriptor, identity, layered,
                               validate_structure)
from core.exceptions import CoefficientError, ValidationError
from core.geometry import PeriodicGeometry, build_unit_cell_grid


def test_identity_passes_validation():
    report = validate_structure(identity(2), samples=6, directions=4)
    assert report.passed
    assert report.symmetry_defect == 0.0
    assert report.ellipticity_lower == pytest.approx(1.0)
    assert report.holder_quotient == pytest.approx(0.0)


def test_layered_values_and_periodicity():
    A = layered(2, values=(1.0, 4.0), fraction=0.5)
    y = np.array([[0.25, 0.1], [0.75, 0.9]])
    vals = A(y)
    assert vals[0, 0, 0, 0, 0] == pytest.approx(1.0)
    assert vals[1, 1, 1, 0, 0] == pytest.approx(4.0)
    assert vals[0, 0, 1, 0, 0] == 0.0
    np.testing.assert_allclose(A(y + 1.0), vals)
    assert A.nu == pytest.approx(0.25)


def test_checkerboard_needs_positive_field():
    with pytest.raises(ValidationError):
        checkerboard(2, mean=1.0, amplitude=1.0)
    report = validate_structure(checkerboard(2), samples=8, directions=4)
    assert report.passed


def test_holder_quotient_uses_minimal_image_distance():
    A = checkerboard(2)
    report = validate_structure(A, samples=12, directions=2)
    axes = (np.arange(12) + 0.5) / 12
    points = np.stack([g.reshape(-1) for g in np.meshgrid(axes, axes, indexing="ij")], axis=1)
    values = A(points).reshape(points.shape[0], -1)
    diff = np.abs(points[:, None, :] - points[None, :, :])
    dist = np.linalg.norm(np.minimum(diff, 1.0 - diff), axis=-1)
    jumps = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=-1)
    off = ~np.eye(points.shape[0], dtype=bool)
    assert report.holder_quotient == pytest.approx(np.max(jumps[off] / dist[off]), rel=1e-12)
    assert 0.0 < report.holder_quotient < np.inf


def test_block_diagonal_system_shape():
    A = block_diagonal(identity(2), layered(2))
    assert A.m == 2
    vals = A(np.array([[0.25, 0.5]]))
    assert vals.shape == (1, 2, 2, 2, 2)
    assert vals[0, 0, 0, 0, 1] == 0.0


def test_scaled_field_scales_values():
    A = layered(2).scaled(4.0)
    np.testing.assert_allclose(A(np.array([[0.25, 0.25]]))[0, 0, 0, 0, 0], 4.0)
    with pytest.raises(ValidationError):
        identity(2).scaled(0.0)


def test_non_finite_values_are_reported():
    bad = CoefficientField(dim=2, m=1, evaluator=lambda y: np.full((y.shape[0], 2, 2, 1, 1), np.nan),
                           nu=1.0, descriptor="bad")
    with pytest.raises(CoefficientError) as info:
        bad(np.array([[0.1, 0.2]]))
    assert info.value.point is not None


def test_from_descriptor():
    assert from_descriptor("layered", dim=2, values=[2.0, 3.0]).params["values"] == [2.0, 3.0]
    with pytest.raises(ValidationError):
        from_descriptor("voronoi", dim=2)


def test_contrast_weight():
    w = ContrastWeight(0.01, 0.1)
    assert w.kappa == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        ContrastWeight(0.0)
    with pytest.raises(ValidationError):
        _ = ContrastWeight(0.5).kappa
    grid = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 8)
    values = contrast_weight_values(ContrastWeight(0.01), grid)
    assert np.count_nonzero(values == 0.01) == 16
    assert np.count_nonzero(values == 1.0) == 48
