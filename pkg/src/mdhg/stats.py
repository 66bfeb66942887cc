"""Two-group comparisons of per-zone metric values."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

EXACT_KS_BELOW = 50


@dataclass(frozen=True)
class ComparisonReport:
    label: str
    n_in: int
    n_out: int
    mean_in: float
    mean_out: float
    t_statistic: float | None
    t_pvalue: float | None
    ks_statistic: float
    ks_pvalue: float

    def as_row(self):
        return {
            "grouping": self.label,
            "n_disadvantaged": self.n_in,
            "n_other": self.n_out,
            "mean_disadvantaged": self.mean_in,
            "mean_other": self.mean_out,
            "t_statistic": self.t_statistic,
            "t_pvalue": self.t_pvalue,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
        }


def ks_two_sample(a, b):
    """Two-sided KS statistic and p-value; exact below 50 combined observations."""
    method = "exact" if len(a) + len(b) < EXACT_KS_BELOW else "asymp"
    with warnings.catch_warnings():
        # scipy falls back to the asymptotic p when the exact one does not converge
        warnings.filterwarnings("ignore", "ks_2samp: Exact calculation unsuccessful")
        res = stats.ks_2samp(a, b, alternative="two-sided", method=method)
    return float(res.statistic), float(res.pvalue)


def welch_t(a, b):
    """Welch's unequal-variance t-test.

    (None, None) when a group has fewer than 2 members or both groups are
    constant, where the statistic is undefined.
    """
    if len(a) < 2 or len(b) < 2:
        return None, None
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return None, None
    res = stats.ttest_ind(a, b, equal_var=False)
    return float(res.statistic), float(res.pvalue)


def compare_groups(values, mask, label=""):
    """Compare values inside the boolean `mask` against those outside it."""
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError("values and mask differ in shape")
    keep = ~np.isnan(values)
    a, b = values[mask & keep], values[~mask & keep]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both groups must be non-empty")
    t, tp = welch_t(a, b)
    d, kp = ks_two_sample(a, b)
    return ComparisonReport(label, len(a), len(b), float(a.mean()), float(b.mean()), t, tp, d, kp)
