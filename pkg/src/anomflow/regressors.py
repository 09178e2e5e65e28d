"""Base learners behind one fit/predict contract.

``GradientBoostedTreesRegressor`` is a forward stage-wise additive model
under squared error: the first prediction is the target mean, every stage
fits a shallow regression tree to the current residuals, and leaves carry
the mean residual (the exact squared-error optimum, so no line search).
``SgdLinearRegressor`` is a linear model trained with single-sample
stochastic gradient steps on standardized features.

The named presets stand in for a family of boosted-tree variants plus the
linear model; they differ only in split mode, depth, and learning rate,
which is the diversity a stacked ensemble needs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, ValidationError
from .tree import SPLIT_MODES, TreeGrower, apply_tree
from .validation import as_float_matrix, as_float_vector, check_n_features, check_same_length

SGD_SCHEDULES = ("constant", "inverse_scaling")


def _check_xy(X, y):
    X = as_float_matrix(X)
    y = as_float_vector(y, "targets")
    check_same_length(X, y, "features and targets")
    if y.size == 0:
        raise ValidationError("empty dataset")
    return X, y


class GradientBoostedTreesRegressor(RegressorMixin, BaseEstimator):
    """Gradient-boosted regression trees with exact or histogram splits.

    Parameters
    ----------
    n_trees : number of boosting stages (0 predicts the target mean).
    learning_rate : shrinkage in (0, 1] applied to every tree's output.
    max_depth : depth limit per tree.
    min_samples_leaf : minimum samples in any leaf.
    split_mode : "exact" (all midpoints between distinct values) or
        "histogram" (equal-width bins fixed over the training range).
    n_bins : bin count for histogram mode.
    seed : accepted for interface parity; the fit is deterministic and
        draws no random numbers.
    """

    def __init__(
        self,
        n_trees: int = 100,
        learning_rate: float = 0.1,
        max_depth: int = 3,
        min_samples_leaf: int = 5,
        split_mode: str = "exact",
        n_bins: int = 255,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.split_mode = split_mode
        self.n_bins = n_bins
        self.seed = seed

    def _check_params(self) -> None:
        if self.n_trees < 0:
            raise ConfigError("n_trees must be non-negative")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be at least 1")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be at least 1")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if self.split_mode == "histogram" and self.n_bins < 2:
            raise ConfigError("n_bins must be at least 2 in histogram mode")

    def fit(self, X, y) -> "GradientBoostedTreesRegressor":
        self._check_params()
        X, y = _check_xy(X, y)
        if self.n_trees > 0 and y.size < self.min_samples_leaf:
            raise ValidationError(
                f"min_samples_leaf unsatisfiable: {y.size} samples < {self.min_samples_leaf}"
            )
        self.init_value_ = float(np.mean(y))
        self.n_features_in_ = X.shape[1]
        trees = []
        if self.n_trees > 0:
            grower = TreeGrower(
                X, self.max_depth, self.min_samples_leaf, self.split_mode, self.n_bins
            )
            residual = y - self.init_value_
            for _ in range(self.n_trees):
                root, train_out = grower.grow(residual)
                residual = residual - self.learning_rate * train_out
                trees.append(root)
        self.trees_ = trees
        return self

    def _check_fitted_input(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise NotFittedError("GradientBoostedTreesRegressor is not fitted")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check_fitted_input(X)
        out = np.full(X.shape[0], self.init_value_, dtype=np.float64)
        for tree in self.trees_:
            out += self.learning_rate * apply_tree(tree, X)
        return out

    def staged_predict(self, X):
        """Yield predictions as of each boosting stage, in stage order."""
        X = self._check_fitted_input(X)
        out = np.full(X.shape[0], self.init_value_, dtype=np.float64)
        for tree in self.trees_:
            out = out + self.learning_rate * apply_tree(tree, X)
            yield out.copy()


def sgd_step(weights, intercept, x, target, eta, l2_penalty):
    """One stochastic update on a single (x, target) example.

    Gradient of half the squared error plus the ridge term: the weights
    move by eta * (error * x - l2 * w) and the intercept by eta * error.
    Pure; returns the new (weights, intercept).
    """
    error = target - (x @ weights + intercept)
    new_w = weights + eta * (error * x - l2_penalty * weights)
    new_b = intercept + eta * error
    return new_w, float(new_b)


class SgdLinearRegressor(RegressorMixin, BaseEstimator):
    """Linear regressor trained by seeded single-sample gradient steps.

    Features are standardized with statistics fitted on the training data
    (zero-variance columns get scale 1); the raw Gbps magnitudes would
    otherwise stall plain SGD. Weights start at zero. ``schedule``
    "constant" keeps the step size fixed; "inverse_scaling" decays it as
    learning_rate / (1 + t) ** 0.25.
    """

    def __init__(
        self,
        epochs: int = 50,
        learning_rate: float = 0.01,
        schedule: str = "constant",
        l2_penalty: float = 1e-4,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.l2_penalty = l2_penalty
        self.seed = seed

    def _check_params(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.schedule not in SGD_SCHEDULES:
            raise ConfigError(f"schedule must be one of {SGD_SCHEDULES}")
        if self.l2_penalty < 0:
            raise ConfigError("l2_penalty must be non-negative")

    def fit(self, X, y) -> "SgdLinearRegressor":
        self._check_params()
        X, y = _check_xy(X, y)
        n, width = X.shape
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        Xs = (X - mean) / scale
        w = np.zeros(width, dtype=np.float64)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        picks = rng.integers(0, n, size=self.epochs * n)
        lr = self.learning_rate
        l2 = self.l2_penalty
        decay = self.schedule == "inverse_scaling"
        for t, i in enumerate(picks):
            eta = lr / (1.0 + t) ** 0.25 if decay else lr
            x = Xs[i]
            error = y[i] - (x @ w + b)
            w += eta * (error * x - l2 * w)
            b += eta * error
        self.coef_ = w
        self.intercept_ = float(b)
        self.feature_mean_ = mean
        self.feature_scale_ = scale
        self.n_features_in_ = width
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise NotFittedError("SgdLinearRegressor is not fitted")
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        Xs = (X - self.feature_mean_) / self.feature_scale_
        return Xs @ self.coef_ + self.intercept_


PRESETS = {
    "gbt-a": dict(split_mode="exact", max_depth=3, learning_rate=0.1),
    "gbt-b": dict(split_mode="histogram", max_depth=3, learning_rate=0.1),
    "gbt-c": dict(split_mode="exact", max_depth=2, learning_rate=0.05),
    "gbt-d": dict(split_mode="histogram", max_depth=4, learning_rate=0.05),
    "sgd": dict(),
}

PRESET_NAMES = tuple(PRESETS)


def make_preset(name: str, seed: int = 0):
    """Instantiate one of the named base-learner presets."""
    if name not in PRESETS:
        raise ConfigError(f"unknown model preset {name!r}; choose from {PRESET_NAMES}")
    if name == "sgd":
        return SgdLinearRegressor(seed=seed)
    return GradientBoostedTreesRegressor(seed=seed, **PRESETS[name])
