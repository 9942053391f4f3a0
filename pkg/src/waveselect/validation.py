"""Input checks shared by the estimators and the functional API."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_X_y


def check_vector(v, name="array"):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return v


def check_1d_predictor(X, y=None):
    """Return ``(x, y)`` where ``x`` is the single predictor column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if y is None:
        X = check_array(X)
    else:
        X, y = check_X_y(X, y, y_numeric=True)
    if X.shape[1] != 1:
        raise ValueError(f"expected a single predictor column, got {X.shape[1]}")
    return X[:, 0], (None if y is None else np.asarray(y, dtype=float))


def add_intercept(X):
    """Design matrix with a leading column of ones."""
    X = check_array(np.asarray(X, dtype=float).reshape(len(X), -1) if np.ndim(X) == 1 else X)
    return np.column_stack([np.ones(X.shape[0]), X])


def has_intercept(X) -> bool:
    X = np.asarray(X, dtype=float)
    return X.ndim == 2 and bool(np.any(np.all(X == 1.0, axis=0)))


def check_full_rank(X):
    X = np.asarray(X, dtype=float)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ValueError(f"design matrix is rank deficient (rank {rank} < {X.shape[1]} columns)")
    return X
