"""Input validation helpers used at public entry points."""

import numpy as np

from .exceptions import DimensionError, InputError, NonFiniteError


def as_matrix(X, n_features=None, name="X", allow_empty=False):
    """Return ``X`` as a C-contiguous float64 matrix.

    A 1-D input is treated as a single row.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise InputError(f"{name} is empty")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionError(f"{name} has {X.shape[1]} columns, expected {n_features}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(X)


def as_vector(x, size=None, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {x.shape}")
    if size is not None and x.shape[0] != size:
        raise DimensionError(f"{name} has length {x.shape[0]}, expected {size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return x


def as_labels(y, n_samples, num_classes=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise DimensionError(f"{name} must have shape ({n_samples},), got {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise InputError(f"{name} must hold integer class labels")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise InputError(f"{name} contains negative labels")
    if num_classes is not None and y.size and y.max() >= num_classes:
        raise InputError(f"{name} has label {y.max()} >= num_classes={num_classes}")
    return y


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise InputError(f"{name} must be finite and {bound}, got {value}")
    return value
