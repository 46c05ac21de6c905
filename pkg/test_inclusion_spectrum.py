#!/usr/bin/env python
"""
Inclusion spectrum tests: eigenvalues, branch labels, Parseval mass and Bloch multiplicities
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.coefficients import identity
from core.exceptions import SpectrumError, ValidationError
from core.geometry import PeriodicGeometry, build_epsilon_lattice, build_unit_cell_grid
from core.inclusion_spectrum import (MEAN_ZERO, NONZERO_MEAN, InclusionSpectrum, bloch_spectrum,
                                     compute_inclusion_spectrum)


@pytest.fixture(scope="module")
def square_spectrum():
    grid_Y = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 64)
    return compute_inclusion_spectrum(grid_Y, identity(2), count=60)


def test_first_eigenvalues_of_square_inclusion(square_spectrum):
    spectrum = square_spectrum
    # side 1/2: μ_kl = 4π²(k² + l²)
    assert spectrum.mu[0] == pytest.approx(8 * np.pi ** 2, rel=1e-2)
    assert spectrum.beta[0] == pytest.approx(1 / (8 * np.pi ** 2), rel=1e-2)
    assert spectrum.alpha[0] == pytest.approx(1 / (20 * np.pi ** 2), rel=1e-2)


def test_branch_labels(square_spectrum):
    spectrum = square_spectrum
    assert spectrum.branch[0] == NONZERO_MEAN
    assert list(spectrum.branch[1:3]) == [MEAN_ZERO, MEAN_ZERO]
    # (1,3) and (3,1) share μ = 40π²; one rotated vector carries the whole mean
    pair = np.flatnonzero(np.isclose(spectrum.mu, 40 * np.pi ** 2, rtol=1e-2))
    assert pair.size == 2
    assert sorted(spectrum.branch[pair]) == [MEAN_ZERO, NONZERO_MEAN]


def test_weights_match_closed_form(square_spectrum):
    spectrum = square_spectrum
    assert spectrum.c[0] == pytest.approx(16 / np.pi ** 4, rel=1e-2)
    assert spectrum.c[1] == pytest.approx(2 * 16 / (9 * np.pi ** 4), rel=1e-2)


def test_parseval_mass(square_spectrum):
    spectrum = square_spectrum
    assert spectrum.parseval_mass + spectrum.tail_mass == pytest.approx(spectrum.theta)
    assert spectrum.parseval_mass >= 0.88 * spectrum.theta
    assert spectrum.tail_mass > 0.0
    assert not spectrum.complete


def test_mean_zero_vectors_have_zero_mean(square_spectrum):
    spectrum = square_spectrum
    assert np.abs(spectrum.psi_means[spectrum.branch == MEAN_ZERO]).max() <= 1e-8
    assert np.all(spectrum.psi_means[spectrum.nonzero_mask] > 0)


def test_complete_spectrum_and_scaling_covariance():
    grid_Y = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 16)
    spectrum = compute_inclusion_spectrum(grid_Y, identity(2), count=None)
    scaled = compute_inclusion_spectrum(grid_Y, identity(2).scaled(4.0), count=None)
    assert spectrum.complete and spectrum.count == 49
    np.testing.assert_allclose(scaled.mu, 4.0 * spectrum.mu, rtol=1e-10)
    np.testing.assert_allclose(scaled.inv, spectrum.inv / 4.0, rtol=1e-10)
    np.testing.assert_array_equal(scaled.branch, spectrum.branch)
    np.testing.assert_allclose(scaled.weights, spectrum.weights, atol=1e-12)


def test_bloch_multiplicities():
    grid_Y = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 16)
    spectrum = compute_inclusion_spectrum(grid_Y, identity(2), count=None)
    lattice = build_epsilon_lattice(2, 4)
    bloch = bloch_spectrum(spectrum, lattice, kappa=2.0)
    first = bloch.entries[0]
    assert first.cluster_dim == 2
    assert first.multiplicity == 16 * 2
    assert first.value == pytest.approx(2.0 * spectrum.alpha[0])
    expanded = bloch.expanded()
    assert expanded.size == 16 * int((~spectrum.nonzero_mask).sum())
    assert np.all(np.diff(expanded) <= 0)
    assert bloch.lower_bound(spectrum) == pytest.approx(2.0 / spectrum.mu[-1])
    with pytest.raises(ValidationError):
        bloch_spectrum(spectrum, lattice, kappa=0.0)


def test_empty_bloch_branch_is_an_error():
    spectrum = InclusionSpectrum(mu=np.array([1.0, 2.0]), psi_means=np.array([0.3, 0.1]),
                             branch=np.array([NONZERO_MEAN, NONZERO_MEAN]), theta=0.25,
                             vectors=np.zeros((3, 2)), node_vectors=np.zeros((9, 2)))
    with pytest.raises(SpectrumError):
        bloch_spectrum(spectrum, build_epsilon_lattice(2, 2), kappa=1.0)


def test_too_few_modes_rejected():
    grid_Y = build_unit_cell_grid(PeriodicGeometry.centered_square(0.5), 16)
    with pytest.raises(ValidationError):
        compute_inclusion_spectrum(grid_Y, identity(2), count=3)
