#!/usr/bin/env python
"""
Rate fitting and eigenvalue pairing tests
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import math

import numpy as np
import pandas as pd
import pytest

from analytics.rates import LogLogRegression, fit_loglog_slope, fit_rates, pair_eigenvalues


def test_exact_power_law_slope():
    eps = np.array([1 / 4, 1 / 8, 1 / 16, 1 / 32])
    fit = fit_loglog_slope(eps, 3.0 * eps ** 0.5)
    assert fit.slope == pytest.approx(0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.rsquared == pytest.approx(1.0)
    assert fit.points == 4
    assert fit.defined


def test_slope_undefined_without_two_positive_points():
    assert not fit_loglog_slope([0.25], [0.1]).defined
    fit = LogLogRegression([0.25, 0.125], [0.0, 0.1]).regress()
    assert not fit.defined and fit.points == 1
    assert fit_loglog_slope([0.5, 0.25], [0.0, 0.0]).points == 0


def test_pairing_by_sorted_position():
    fine = [0.9, 2.0, 1.1]
    limit = [1.0, 1.0, 2.1, 0.5]
    errors = pair_eigenvalues(fine, limit, k=3)
    np.testing.assert_allclose(errors, [0.1, 0.1, 0.1])
    assert pair_eigenvalues(fine, limit, k=10).size == 3


def test_fit_rates_per_column_and_aggregate():
    eps = [0.5, 0.25, 0.125]
    errors = pd.DataFrame({"i=1": [0.4, 0.2, 0.1], "i=2": [0.16, 0.04, 0.01]})
    fits = fit_rates(eps, errors)
    assert fits["i=1"].slope == pytest.approx(1.0)
    assert fits["i=2"].slope == pytest.approx(2.0)
    assert fits["aggregate"].slope == pytest.approx(1.0)
