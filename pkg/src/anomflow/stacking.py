"""Stacked generalization over expanding-fold out-of-fold predictions.

For each expanding fold, every base learner trains on the fold's past and
predicts its test block, so the meta-model's training rows are never seen
by the model that produced them. The meta-model is ridge-regularized
linear regression solved in closed form (intercept unpenalized); the bases
are then refit on the full training data for deployment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, ValidationError
from .util import derive_seed
from .validation import as_float_matrix, check_n_features
from .windowing import FoldPlan, expanding_folds
from .regressors import _check_xy


@dataclass(frozen=True)
class OofMatrix:
    """Out-of-fold prediction matrix plus per-row training provenance.

    Row r corresponds to sample ``offset + r`` of the source data;
    ``row_train_end[r]`` is the exclusive end of the training range of the
    model that produced it, so leakage freedom is checkable after the fact.
    """

    matrix: np.ndarray = field(repr=False)
    offset: int
    row_train_end: np.ndarray = field(repr=False)


def oof_prediction_matrix(X, y, estimators, folds: FoldPlan, seed: int = 0) -> OofMatrix:
    """Train every base per fold and collect its test-block predictions.

    ``estimators`` is a list of (name, estimator) pairs; estimators are
    cloned per fold, and those exposing a ``seed`` parameter get a stream
    derived from (seed, fold, base) so results are schedule-independent.
    """
    X, y = _check_xy(X, y)
    n = y.size
    last_end = folds.boundaries[-1][2]
    if last_end > n:
        raise ValidationError(
            f"fold plan covers {last_end} samples but data has only {n}"
        )
    offset = folds.boundaries[0][1]
    n_rows = last_end - offset
    matrix = np.empty((n_rows, len(estimators)), dtype=np.float64)
    row_train_end = np.empty(n_rows, dtype=np.int64)
    for fold_i, (train_end, test_start, test_end) in enumerate(folds.boundaries):
        lo = test_start - offset
        hi = test_end - offset
        row_train_end[lo:hi] = train_end
        for base_i, (_, estimator) in enumerate(estimators):
            model = clone(estimator)
            if "seed" in model.get_params():
                model.set_params(seed=derive_seed(seed, fold_i, base_i))
            model.fit(X[:train_end], y[:train_end])
            matrix[lo:hi, base_i] = model.predict(X[test_start:test_end])
    return OofMatrix(matrix=matrix, offset=offset, row_train_end=row_train_end)


def solve_ridge(M, targets, ridge_lambda: float):
    """Closed-form ridge regression of targets on M with a free intercept."""
    n, p = M.shape
    Z = np.hstack([M, np.ones((n, 1))])
    A = Z.T @ Z
    A[:p, :p] += ridge_lambda * np.eye(p)
    b = Z.T @ targets
    try:
        solution = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValidationError(
            "meta-model system is singular; set ridge_lambda > 0"
        ) from exc
    return solution[:p], float(solution[p])


class StackedRegressor(RegressorMixin, BaseEstimator):
    """Level-1 linear blend of level-0 base models.

    The prediction is ``meta_intercept_ + sum_j meta_weights_[j] *
    base_j.predict(x)`` with the base order fixed at construction.
    """

    def __init__(self, estimators, k_folds: int = 5, ridge_lambda: float = 1e-3, seed: int = 0):
        self.estimators = estimators
        self.k_folds = k_folds
        self.ridge_lambda = ridge_lambda
        self.seed = seed

    def _check_params(self) -> None:
        if not self.estimators:
            raise ConfigError("estimators must be a non-empty list of (name, estimator) pairs")
        names = [name for name, _ in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.ridge_lambda < 0:
            raise ConfigError("ridge_lambda must be non-negative")

    def fit(self, X, y) -> "StackedRegressor":
        self._check_params()
        X, y = _check_xy(X, y)
        folds = expanding_folds(y.size, self.k_folds)
        oof = oof_prediction_matrix(X, y, self.estimators, folds, seed=self.seed)
        weights, intercept = solve_ridge(oof.matrix, y[oof.offset:], self.ridge_lambda)
        self.meta_weights_ = weights
        self.meta_intercept_ = intercept
        self.oof_ = oof
        self.base_estimators_ = [
            (name, clone(estimator).fit(X, y)) for name, estimator in self.estimators
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def _base_predictions(self, X) -> np.ndarray:
        columns = [model.predict(X) for _, model in self.base_estimators_]
        return np.column_stack(columns)

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "meta_weights_"):
            raise NotFittedError("StackedRegressor is not fitted")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        return self._base_predictions(X) @ self.meta_weights_ + self.meta_intercept_
