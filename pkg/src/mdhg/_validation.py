"""Input validation helpers shared by the estimators and functional API."""

import numpy as np
from sklearn.utils import check_array


def check_vector(values, name="values", allow_nan=False, min_size=1):
    """Return `values` as a 1-D float array, raising ValueError on bad input."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_size:
        raise ValueError(f"{name} is empty")
    bad = ~np.isfinite(arr)
    if allow_nan:
        bad &= ~np.isnan(arr)
    if bad.any():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_zone_matrix(X, name="X", allow_nan=True):
    """Zones-by-columns float matrix; NaN marks a missing (unserved) cell."""
    X = check_array(
        X,
        dtype=np.float64,
        ensure_all_finite="allow-nan" if allow_nan else True,
        ensure_2d=True,
        input_name=name,
    )
    if np.isinf(X).any():
        raise ValueError(f"{name} contains infinite values")
    return X


def check_aligned(*arrays, names=None):
    sizes = {len(a) for a in arrays}
    if len(sizes) > 1:
        names = names or [f"arg{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={len(a)}" for n, a in zip(names, arrays))
        raise ValueError(f"inputs are not aligned: {detail}")
