"""Analytics package."""

from analytics.rates import LogLogRegression, SlopeFit, fit_loglog_slope, fit_rates, pair_eigenvalues

__all__ = ["LogLogRegression", "SlopeFit", "fit_loglog_slope", "fit_rates", "pair_eigenvalues"]
