"""Normalisation primitives and the equity metric stack.

Functions operate on plain arrays. The estimator classes wrap the same
computations behind ``fit``/``transform`` so that ranks and parent-area means
learned on one set of zones can be applied to hourly performance matrices.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_aligned, check_vector, check_zone_matrix

SCOPES = ("hour", "joint")


def minmax(values, degenerate=0.0):
    """Rescale to [0, 1]; NaNs pass through, a constant input maps to `degenerate`."""
    v = check_vector(values, allow_nan=True)
    ok = ~np.isnan(v)
    if not ok.any():
        raise ValueError("minmax needs at least one finite value")
    lo, hi = v[ok].min(), v[ok].max()
    out = np.full(v.shape, np.nan)
    if hi == lo:
        out[ok] = degenerate
    else:
        out[ok] = (v[ok] - lo) / (hi - lo)
    return out


def percentile_rank(values):
    """Share of values at or below each value (ties share a rank, NaNs ignored)."""
    v = check_vector(values, allow_nan=True)
    ok = ~np.isnan(v)
    if not ok.any():
        raise ValueError("percentile_rank needs at least one finite value")
    ref = np.sort(v[ok])
    out = np.full(v.shape, np.nan)
    out[ok] = np.searchsorted(ref, v[ok], side="right") / len(ref)
    return out


def lognorm(values, degenerate=0.0):
    """minmax of ln(1 + v) for non-negative v."""
    v = check_vector(values, allow_nan=True)
    if (v[~np.isnan(v)] < 0).any():
        raise ValueError("lognorm is defined for non-negative values only")
    return minmax(np.log1p(v), degenerate=degenerate)


def parent_means(x, parents):
    """Mean of `x` over the zones sharing each zone's parent id."""
    x = check_vector(x, "x")
    parents = np.asarray(parents).astype(str)
    check_aligned(x, parents, names=["x", "parents"])
    k = np.empty_like(x)
    for p in np.unique(parents):
        sel = parents == p
        k[sel] = x[sel].mean()
    return k


def squared_deficit(x, k):
    """((k - x) / k)² for zones below their parent mean, 0 elsewhere (and where k <= 0)."""
    x, k = np.asarray(x, dtype=float), np.asarray(k, dtype=float)
    below = (x < k) & (k > 0)
    out = np.zeros_like(x)
    out[below] = ((k[below] - x[below]) / k[below]) ** 2
    return out


def insufficiency_raw(n, x, k):
    """Gated product of log-normalised population and log-normalised squared deficit.

    A factor that is constant across zones carries no ranking information and
    is treated as 1 so it cannot annihilate the other factor. Zones with no
    population or no deficit stay at 0.
    """
    n = check_vector(n, "n")
    x = check_vector(x, "x")
    k = check_vector(k, "k")
    check_aligned(n, x, k, names=["n", "x", "k"])
    if (n < 0).any() or (x < 0).any():
        raise ValueError("population and reachable area must be non-negative")
    deficit = squared_deficit(x, k)
    raw = lognorm(n, degenerate=1.0) * lognorm(deficit, degenerate=1.0)
    raw[(deficit == 0) | (n == 0)] = 0.0
    return raw


def _per_scope_minmax(M, scope):
    out = np.full(M.shape, np.nan)
    if scope == "joint":
        ok = ~np.isnan(M)
        if ok.any():
            out[ok] = minmax(M[ok])
        return out
    for h in range(M.shape[1]):
        col = M[:, h]
        if (~np.isnan(col)).any():
            out[:, h] = minmax(col)
    return out


def _check_scope(scope):
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")


class PercentileRank(TransformerMixin, BaseEstimator):
    """Column-wise percentile rank against the fitted reference sample.

    With ``reverse=True`` the rank counts reference values at or *above*
    each value, so the smallest value gets rank 1.
    """

    def __init__(self, reverse=False):
        self.reverse = reverse

    def fit(self, X, y=None):
        X = check_zone_matrix(X)
        self.references_ = [np.sort(col[~np.isnan(col)]) for col in X.T]
        if any(len(r) == 0 for r in self.references_):
            raise ValueError("every column needs at least one finite value")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_zone_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        out = np.full(X.shape, np.nan)
        for j, ref in enumerate(self.references_):
            col = X[:, j]
            ok = ~np.isnan(col)
            if self.reverse:
                out[ok, j] = (len(ref) - np.searchsorted(ref, col[ok], side="left")) / len(ref)
            else:
                out[ok, j] = np.searchsorted(ref, col[ok], side="right") / len(ref)
        return out


class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Min-max rescaling per column (``scope="hour"``) or over the whole matrix."""

    def __init__(self, scope="hour", degenerate=0.0):
        self.scope = scope
        self.degenerate = degenerate

    def fit(self, X, y=None):
        _check_scope(self.scope)
        X = check_zone_matrix(X)
        if self.scope == "joint":
            lo = np.full(X.shape[1], np.nanmin(X))
            hi = np.full(X.shape[1], np.nanmax(X))
        else:
            lo, hi = np.nanmin(X, axis=0), np.nanmax(X, axis=0)
        self.data_min_, self.data_max_ = lo, hi
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_zone_matrix(X)
        span = self.data_max_ - self.data_min_
        flat = span == 0
        safe = np.where(flat, 1.0, span)
        out = (X - self.data_min_) / safe
        out[:, flat] = np.where(np.isnan(X[:, flat]), np.nan, self.degenerate)
        return out


class ServiceDisparity(TransformerMixin, BaseEstimator):
    """Population-weighted performance disparity.

    ``fit`` takes the served zones' population counts; ``transform`` takes a
    served-zones x hours performance matrix and returns the min-max normalised
    product of performance and population percentile rank.
    """

    def __init__(self, scope="hour"):
        self.scope = scope

    def fit(self, n, y=None):
        _check_scope(self.scope)
        n = check_vector(n, "n")
        self.population_rank_ = percentile_rank(n)
        return self

    def transform(self, pm):
        check_is_fitted(self)
        pm = check_zone_matrix(pm, "pm")
        if pm.shape[0] != len(self.population_rank_):
            raise ValueError("performance matrix rows do not match fitted zones")
        return _per_scope_minmax(pm * self.population_rank_[:, None], self.scope)


class AccessInsufficiency(TransformerMixin, BaseEstimator):
    """Destination-access insufficiency and its performance-integrated variant.

    ``fit(X, groups=parents)`` with X columns ``[population, reachable_area]``
    learns parent-area means ``k_``, the gated raw insufficiency ``raw_`` and
    its normalised form ``i_access_``. ``transform(z)`` combines an hourly
    performance matrix for the same zones with the insufficiency rank.
    """

    def __init__(self, scope="hour"):
        self.scope = scope

    def fit(self, X, y=None, groups=None, k=None):
        _check_scope(self.scope)
        X = check_zone_matrix(X, allow_nan=False)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns: population, reachable area")
        n, x = X[:, 0], X[:, 1]
        if k is None:
            if groups is None:
                groups = np.zeros(len(x), dtype=int)
            k = parent_means(x, groups)
        k = check_vector(k, "k")
        check_aligned(n, x, k, names=["n", "x", "k"])
        self.k_ = k
        self.zero_mean_ = k <= 0
        self.raw_ = insufficiency_raw(n, x, k)
        self.i_access_ = minmax(self.raw_)
        self.insufficiency_rank_ = percentile_rank(self.raw_)
        self.n_features_in_ = 2
        return self

    def transform(self, z):
        check_is_fitted(self)
        z = check_zone_matrix(z, "z")
        if z.shape[0] != len(self.raw_):
            raise ValueError("performance matrix rows do not match fitted zones")
        return _per_scope_minmax(z * self.insufficiency_rank_[:, None], self.scope)


def _served_rows(M):
    return ~np.all(np.isnan(M), axis=1)


def d_sp(pm, n, served=None, scope="hour"):
    """Service performance disparity per (zone, hour); unserved zones get 1."""
    pm = check_zone_matrix(pm, "pm")
    n = check_vector(n, "n")
    check_aligned(pm, n, names=["pm", "n"])
    served = _served_rows(pm) if served is None else np.asarray(served, dtype=bool)
    out = np.ones(pm.shape)
    if served.any():
        est = ServiceDisparity(scope=scope).fit(n[served])
        out[served] = est.transform(pm[served])
    return out


def i_access(n, x, parents, k=None):
    """Destination access insufficiency per zone; returns (I_access, raw)."""
    est = AccessInsufficiency().fit(np.column_stack((n, x)), groups=parents, k=k)
    return est.i_access_, est.raw_


def zi_access(z, n, x, parents, k=None, scope="hour"):
    """Performance-integrated access insufficiency per (zone, hour).

    Rows of `z` that are entirely NaN are unserved; they are left out of every
    rank and normalisation and come back as NaN.
    """
    z = check_zone_matrix(z, "z")
    n, x = check_vector(n, "n"), check_vector(x, "x")
    parents = np.asarray(parents).astype(str)
    check_aligned(z, n, x, parents, names=["z", "n", "x", "parents"])
    served = _served_rows(z)
    out = np.full(z.shape, np.nan)
    if served.any():
        kk = None if k is None else np.asarray(k, dtype=float)[served]
        est = AccessInsufficiency(scope=scope).fit(
            np.column_stack((n[served], x[served])), groups=parents[served], k=kk
        )
        out[served] = est.transform(z[served])
    return out
