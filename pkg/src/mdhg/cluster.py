"""Attribute-space k-means over zones, for comparing against parent-area boundaries."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.metrics import rand_score
from sklearn.preprocessing import StandardScaler
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InputError


def farthest_point_init(X, k, rng):
    """Greedy seeding: a random first centre, then repeatedly the point farthest
    from all chosen centres (lowest index on ties)."""
    first = rng.randint(X.shape[0])
    chosen = [first]
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _lloyd(X, centers, max_iter):
    path = []
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        path.append(float(d2[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            members = X[labels == j]
            # an emptied cluster keeps its centre, which cannot raise inertia
            if len(members):
                centers[j] = members.mean(axis=0)
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(len(X)), labels].sum())
    path.append(inertia)
    return labels, centers, inertia, path


class ZoneKMeans(ClusterMixin, BaseEstimator):
    """k-means with farthest-point seeding and best-of-`n_init` restarts.

    ``inertia_path_`` records the objective after every assignment step of the
    winning restart; it never increases.
    """

    def __init__(self, n_clusters=8, n_init=20, max_iter=300, standardize=True, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.n_clusters < 1 or self.n_clusters > X.shape[0]:
            raise ValueError(f"n_clusters={self.n_clusters} must be in [1, {X.shape[0]}]")
        self.scaler_ = StandardScaler().fit(X) if self.standardize else None
        Xs = self.scaler_.transform(X) if self.standardize else X
        rng = check_random_state(self.random_state)
        best = None
        for _ in range(self.n_init):
            init = farthest_point_init(Xs, self.n_clusters, rng)
            run = _lloyd(Xs, init, self.max_iter)
            if best is None or run[2] < best[2]:
                best = run
        self.labels_, self.cluster_centers_, self.inertia_, self.inertia_path_ = best
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        Xs = self.scaler_.transform(X) if self.standardize else X
        d2 = ((Xs[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)


@dataclass
class ClusterAssignment:
    labels: pd.Series  # zone id -> cluster label
    n_clusters: int
    inertia: float
    features: tuple
    rand_index: float | None = None


def cluster_zones(features, n_clusters, seed=0, parents=None, n_init=20):
    """Cluster a zone-indexed feature frame; optionally score agreement with parents."""
    if n_clusters > len(features):
        raise ValueError(f"cannot form {n_clusters} clusters from {len(features)} zones")
    km = ZoneKMeans(n_clusters=n_clusters, n_init=n_init, random_state=seed).fit(features.values)
    labels = pd.Series(km.labels_, index=features.index, name="cluster")
    ri = None
    if parents is not None:
        ri = float(rand_score(pd.Series(parents).reindex(features.index).astype(str), labels))
    return ClusterAssignment(labels, n_clusters, km.inertia_, tuple(features.columns), ri)


def load_embeddings(source):
    """Zone embeddings: first column zone_id, remaining columns numeric."""
    try:
        df = pd.read_csv(source, dtype={"zone_id": str})
    except FileNotFoundError:
        raise InputError(f"embedding file not found: {source}") from None
    if df.columns[0] != "zone_id" or df.shape[1] < 2:
        raise InputError(f"{source}: expected zone_id followed by vector columns")
    df = df.set_index("zone_id")
    try:
        df = df.astype(float)
    except ValueError:
        raise InputError(f"{source}: embedding vectors must be numeric") from None
    if df.isna().any().any():
        raise InputError(f"{source}: embedding rows must all have the same width")
    return df
