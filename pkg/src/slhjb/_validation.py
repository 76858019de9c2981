"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import math
import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_points(X, dim):
    """Coerce query points to a finite (n, dim) float array.

    A flat array of length dim is read as one point.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim <= 1 and X.size == dim:
        X = X.reshape(1, dim)
    elif dim == 1 and X.ndim == 1:
        X = X.reshape(-1, 1)
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != dim:
        raise ValueError(f"expected points with {dim} coordinates, got {X.shape[1]}")
    return X


def check_positive(name, value, allow_none=False):
    if value is None and allow_none:
        return None
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_step_choice(dt, cfl):
    """Exactly one of dt / cfl."""
    if (dt is None) == (cfl is None):
        raise ValueError("give exactly one of dt and cfl")
    if dt is not None:
        return check_positive("dt", dt), None
    return None, check_positive("cfl", cfl)


def check_count(name, value, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer")
    if value < minimum:
        raise ValueError(f"{name} must be at least {minimum}")
    return int(value)
