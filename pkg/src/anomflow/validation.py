"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_float_vector(x, name: str = "values") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    return arr


def as_float_matrix(x, name: str = "features") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if len(a) != len(b):
        raise ValidationError(f"length mismatch: {what} have lengths {len(a)} and {len(b)}")


def check_n_features(x: np.ndarray, expected: int) -> None:
    if x.shape[1] != expected:
        raise ValidationError(
            f"feature width mismatch: model expects {expected} columns, got {x.shape[1]}"
        )
