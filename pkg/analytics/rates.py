"""Log-log convergence rates and eigenvalue pairing."""

from dataclasses import dataclass
from typing import Dict, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd
import statsmodels.api as sm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    rsquared: float
    points: int

    @property
    def defined(self) -> bool:
        return math.isfinite(self.slope)

    def to_dict(self) -> Dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "rsquared": self.rsquared, "points": self.points}


UNDEFINED = SlopeFit(math.nan, math.nan, math.nan, 0)


class LogLogRegression:
    """OLS of log(error) on log(epsilon)."""

    def __init__(self, epsilons, errors):
        self.epsilons = np.asarray(epsilons, dtype=float)
        self.errors = np.asarray(errors, dtype=float)

    def regress(self) -> SlopeFit:
        keep = (self.epsilons > 0) & (self.errors > 0) & np.isfinite(self.errors)
        if np.count_nonzero(keep) < 2:
            return UNDEFINED if not keep.any() else SlopeFit(math.nan, math.nan, math.nan, int(keep.sum()))
        X = sm.add_constant(np.log(self.epsilons[keep]))
        model = sm.OLS(np.log(self.errors[keep]), X).fit()
        rsquared = float(model.rsquared) if np.isfinite(model.rsquared) else 1.0
        return SlopeFit(slope=float(model.params[1]), intercept=float(model.params[0]),
                        rsquared=rsquared, points=int(keep.sum()))


def fit_loglog_slope(epsilons: Sequence[float], errors: Sequence[float]) -> SlopeFit:
    return LogLogRegression(epsilons, errors).regress()


def pair_eigenvalues(fine: Sequence[float], limit: Sequence[float], k: int) -> np.ndarray:
    """|λ^i - η^i| by sorted position, both lists taken in decreasing order.

    Lists expanded by multiplicity pair cluster members one to one. The
    number of pairs is min(k, len(fine), len(limit)).
    """
    fine = np.sort(np.asarray(fine, dtype=float))[::-1]
    limit = np.sort(np.asarray(limit, dtype=float))[::-1]
    count = min(k, fine.size, limit.size)
    if count < k:
        logger.info("paired %d of %d requested eigenvalues (fine %d, limit %d)",
                    count, k, fine.size, limit.size)
    return np.abs(fine[:count] - limit[:count])


def fit_rates(epsilons: Sequence[float], errors: pd.DataFrame) -> Dict[str, SlopeFit]:
    """Slope per column of `errors` (rows indexed like epsilons) plus the aggregate.

    The aggregate fits the largest error across columns at each ε.
    """
    fits = {str(col): fit_loglog_slope(epsilons, errors[col].to_numpy()) for col in errors.columns}
    fits["aggregate"] = fit_loglog_slope(epsilons, errors.max(axis=1, skipna=True).to_numpy())
    return fits


def slopes_table(fits: Dict[str, SlopeFit], floor: Optional[float] = None) -> pd.DataFrame:
    rows = [{"series": name, **fit.to_dict()} for name, fit in fits.items()]
    frame = pd.DataFrame(rows)
    if floor is not None:
        frame["passes"] = frame["slope"] >= floor
    return frame
