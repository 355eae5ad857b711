"""Input validation shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionError, ParameterError


def check_matrix(A, name="A", min_rows=1, min_cols=1):
    """Return ``A`` as a finite 2-D float64 array."""
    A = check_array(A, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                    ensure_min_samples=min_rows, ensure_min_features=min_cols,
                    input_name=name)
    return A


def check_vector(x, name="x", length=None, allow_empty=False):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {x.shape}")
    if not allow_empty and x.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ParameterError(f"{name} has non-finite entries")
    if length is not None and x.shape[0] != length:
        raise DimensionError(f"{name} has length {x.shape[0]}, expected {length}")
    return x


def check_rng(seed):
    """Turn ``None``, an int, a ``SeedSequence`` or a ``Generator`` into a ``Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ParameterError(f"cannot build a random generator from {seed!r}")


def check_positive(value, name, strict=True):
    if not np.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ParameterError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ParameterError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_count(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
