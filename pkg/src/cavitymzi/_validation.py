"""Input validation helpers shared across modules."""
import math
import numbers

import numpy as np

from .exceptions import DimensionError

#: default guard on the total dimension of a composite state vector
MAX_DIMENSION = 65536


def check_finite_scalar(value, name, *, complex_ok=False):
    if complex_ok:
        if not isinstance(value, numbers.Number):
            raise TypeError(f"{name} must be a number, got {type(value).__name__}")
        z = complex(value)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            raise ValueError(f"{name} must be finite, got {value!r}")
        return z
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    x = float(value)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return x


def check_nonnegative(value, name):
    x = check_finite_scalar(value, name)
    if x < 0:
        raise ValueError(f"{name} must be >= 0, got {x}")
    return x


def check_dimension(dim, max_dimension=None):
    limit = MAX_DIMENSION if max_dimension is None else max_dimension
    if dim > limit:
        raise DimensionError(f"total dimension {dim} exceeds the guard {limit}")
    return dim


def check_probability_table(probs, *, atol=1e-9, name="probs"):
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ValueError(f"{name} must be a 2-D table, got shape {p.shape}")
    if np.any(p < -atol):
        raise ValueError(f"{name} has negative entries (min {p.min():.3g})")
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} is not normalized (sum = {total!r})")
    return p


def check_count_records(counts):
    """Return an (k, 2) integer array of (n, m) photon-count pairs."""
    arr = np.asarray(counts)
    if arr.size == 0:
        raise ValueError("no count records supplied")
    arr = arr.reshape(-1, 2)
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.array_equal(rounded, arr):
            raise ValueError("photon counts must be integers")
        arr = rounded.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError("photon counts must be nonnegative")
    return arr.astype(np.int64, copy=False)
