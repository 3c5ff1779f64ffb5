"""Small input-checking helpers shared across modules."""

import math

import numpy as np

from .exceptions import ValidationError


def check_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValidationError(f"{name} must be finite, got {v!r}")


def check_positive(name, value, allow_zero=False):
    check_finite(name, value)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"{name} must be {bound}, got {value!r}")


def check_vector3(name, v):
    """Return ``v`` as a finite float array of shape (3,)."""
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValidationError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {arr}")
    return arr


def check_points(name, X, ncols):
    """Return ``X`` as a finite 2-D float array with ``ncols`` columns."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == ncols:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != ncols:
        raise ValidationError(f"{name} must have shape (n, {ncols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr
