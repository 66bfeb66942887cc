"""Recovery time below availability thresholds and the service-recovery integral."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_vector

DEFAULT_RANGE = (0.3, 0.8)
DEFAULT_STEP = 0.1
BAND_WIDTH = 3.0
N_BANDS = 4


@dataclass(frozen=True)
class RecoveryProfile:
    zone_id: str
    thresholds: tuple
    recovery_hours: tuple
    sr: float
    sr_band: int


def _check_profile(zeta):
    zeta = check_vector(zeta, "zeta")
    if len(zeta) != 24:
        raise ValueError(f"expected 24 hourly values, got {len(zeta)}")
    return zeta


def recovery_time(zeta, level, mode="total"):
    """Hours of the day with availability below `level`.

    ``mode="total"`` sums every below-threshold hour; ``mode="longest"`` keeps
    only the longest consecutive run.
    """
    below = _check_profile(zeta) < level
    if mode == "total":
        return int(below.sum())
    if mode == "longest":
        best = run = 0
        for b in below:
            run = run + 1 if b else 0
            best = max(best, run)
        return best
    raise ValueError(f"unknown recovery mode {mode!r}")


def threshold_grid(l_range=DEFAULT_RANGE, dl=DEFAULT_STEP):
    lo, hi = l_range
    if not (0 < lo < hi < 1):
        raise ValueError(f"threshold range must satisfy 0 < lo < hi < 1, got {l_range}")
    if dl <= 0:
        raise ValueError("threshold step must be positive")
    steps = (hi - lo) / dl
    n = int(round(steps))
    if n < 1 or abs(steps - n) > 1e-9:
        raise ValueError(f"step {dl} does not divide the range {l_range}")
    # rounding keeps e.g. 0.6 from becoming 0.6000000000000001 and flipping a < test
    return np.round(lo + np.arange(n + 1) * ((hi - lo) / n), 12)


def sr_integral(zeta, l_range=DEFAULT_RANGE, dl=DEFAULT_STEP, rule="trapezoid", mode="total"):
    """Integral of recovery time over the threshold band.

    ``rule="rectangle"`` is a left Riemann sum over the same grid.
    """
    levels = threshold_grid(l_range, dl)
    r = np.array([recovery_time(zeta, lv, mode) for lv in levels], dtype=float)
    return _integrate(r, levels, rule)


def _integrate(r, levels, rule):
    n = len(levels) - 1
    step = (levels[-1] - levels[0]) / n
    if rule == "trapezoid":
        return float(step * (r.sum() - 0.5 * (r[0] + r[-1])))
    if rule == "rectangle":
        return float(step * r[:-1].sum())
    raise ValueError(f"unknown quadrature rule {rule!r}")


def categorize_sr(sr, band_width=BAND_WIDTH, n_bands=N_BANDS):
    """Band 0 for SR == 0, then bands of `band_width` ((0, 3] -> 1, ... (9, 12] -> 4)."""
    top = band_width * n_bands
    if not (0 <= sr <= top + 1e-9):
        raise ValueError(f"SR {sr} outside [0, {top}]")
    if sr == 0:
        return 0
    return int(min(np.ceil(sr / band_width - 1e-12), n_bands))


def recovery_profile(zone_id, zeta, l_range=DEFAULT_RANGE, dl=DEFAULT_STEP, rule="trapezoid", mode="total"):
    levels = threshold_grid(l_range, dl)
    r = np.array([recovery_time(zeta, lv, mode) for lv in levels], dtype=float)
    sr = _integrate(r, levels, rule)
    return RecoveryProfile(
        zone_id=str(zone_id),
        thresholds=tuple(float(v) for v in levels),
        recovery_hours=tuple(int(v) for v in r),
        sr=sr,
        sr_band=categorize_sr(sr),
    )
