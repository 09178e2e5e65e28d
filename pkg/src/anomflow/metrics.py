"""Forecast error metrics: MAPE and its accuracy complement."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .validation import as_float_vector, check_same_length

MAPE_EPSILON = 1e-9


def mape(predicted, actual, epsilon: float = MAPE_EPSILON) -> float:
    """Mean absolute percentage error, in percent.

    (1/n) * sum(|p_i - o_i| / |o_i|) * 100 over equal-length vectors.
    Any actual value within ``epsilon`` of zero is an error rather than a
    silently dropped term, since dropping terms would change n.
    """
    p = as_float_vector(predicted, "predicted")
    o = as_float_vector(actual, "actual")
    check_same_length(p, o, "predicted and actual")
    if o.size == 0:
        raise ValidationError("cannot compute MAPE of empty vectors")
    if (np.abs(o) <= epsilon).any():
        i = int(np.flatnonzero(np.abs(o) <= epsilon)[0])
        raise ValidationError(f"actual value at/near zero at index {i} ({o[i]!r})")
    return float(np.mean(np.abs(p - o) / np.abs(o)) * 100.0)


def accuracy(mape_percent: float) -> float:
    """Model accuracy, defined as 100 minus the MAPE percentage."""
    if mape_percent < 0:
        raise ValidationError(f"MAPE must be non-negative, got {mape_percent}")
    return 100.0 - mape_percent
