"""Small input-validation helpers shared by all modules."""

import numpy as np


def as_series(x, name="series", min_len=2):
    """Coerce to a 1-D float64 array and check length and finiteness."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValueError(f"{name} needs at least {min_len} samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(x, name="matrix"):
    """Coerce to a 2-D float64 array with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_square_matrix(x, name="matrix"):
    arr = as_matrix(x, name=name)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_symmetric(a, name="matrix", tol=0.0):
    err = np.max(np.abs(a - a.T)) if a.size else 0.0
    if err > tol:
        raise ValueError(f"{name} is not symmetric (max asymmetry {err:.3e})")


def check_in_unit_interval(value, name, open_interval=False):
    lo_ok = value > 0 if open_interval else value >= 0
    hi_ok = value < 1 if open_interval else value <= 1
    if not (lo_ok and hi_ok):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
