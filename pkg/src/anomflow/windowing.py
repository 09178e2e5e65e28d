"""Sliding-window supervision and temporal splits.

A series of length n and a window length W yield n - W samples: sample i
has the W consecutive values starting at i as features and the value at
i + W as target. Cross-validation folds are expanding (rolling-origin):
every fold trains strictly before the block it tests on, so lag features
never see the future.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .series import TimeSeries


@dataclass(frozen=True)
class SupervisedDataset:
    """Lag-feature matrix and aligned targets produced by windowing."""

    features: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    window_length: int
    origin_index: int = 0

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        t = np.asarray(self.targets, dtype=np.float64)
        if f.ndim != 2 or t.ndim != 1:
            raise ValidationError("features must be 2-D and targets 1-D")
        if f.shape[0] != t.shape[0]:
            raise ValidationError("features and targets disagree on sample count")
        if f.shape[0] == 0:
            raise ValidationError("dataset must contain at least one sample")
        if f.shape[1] != self.window_length:
            raise ValidationError(
                f"feature width {f.shape[1]} does not match window length {self.window_length}"
            )
        f.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @property
    def n_samples(self) -> int:
        return int(self.targets.size)


@dataclass(frozen=True)
class FoldPlan:
    """Temporally ordered (train_end, test_start, test_end) triples."""

    k: int
    boundaries: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        prev_end = 0
        for train_end, test_start, test_end in self.boundaries:
            if test_start != train_end:
                raise ValidationError("each test range must start at its train range's end")
            if not 0 < test_start < test_end:
                raise ValidationError("fold boundaries must be positive and ordered")
            if test_start < prev_end:
                raise ValidationError("test ranges must be disjoint and ordered")
            prev_end = test_end
        if len(self.boundaries) != self.k:
            raise ValidationError("fold count does not match boundary list")


def make_supervised(series: TimeSeries, window_length: int) -> SupervisedDataset:
    """Window a series into supervised (lags, next value) samples."""
    if window_length <= 0:
        raise ValidationError(f"window length must be positive, got {window_length}")
    n = len(series)
    if n <= window_length:
        raise ValidationError(
            f"window too long: series has {n} points, window length {window_length}"
        )
    view = np.lib.stride_tricks.sliding_window_view(series.values, window_length + 1)
    features = view[:, :window_length].copy()
    targets = view[:, window_length].copy()
    return SupervisedDataset(features, targets, window_length)


def chronological_split(
    series: TimeSeries, train_days: int, points_per_day: int
) -> tuple[TimeSeries, TimeSeries]:
    """First ``train_days`` whole days for training, the rest for testing."""
    if train_days <= 0 or points_per_day <= 0:
        raise ValidationError("train_days and points_per_day must be positive")
    cut = train_days * points_per_day
    if cut >= len(series):
        raise ValidationError(
            f"insufficient length: {len(series)} points cannot hold {train_days} "
            f"training days of {points_per_day} points plus a test remainder"
        )
    return series.slice(0, cut), series.slice(cut, len(series))


def expanding_folds(n_samples: int, k: int) -> FoldPlan:
    """Rolling-origin folds: k+1 contiguous blocks, fold j trains on blocks
    0..j and tests on block j+1.

    Blocks are nearly equal; any remainder goes to the earliest blocks so
    the final test block is exact.
    """
    if k < 2:
        raise ValidationError(f"fold count must be at least 2, got {k}")
    if n_samples < 2 * k:
        raise ValidationError(f"n_samples too small: {n_samples} < {2 * k} for k={k}")
    n_blocks = k + 1
    base = n_samples // n_blocks
    remainder = n_samples % n_blocks
    sizes = [base + 1 if i < remainder else base for i in range(n_blocks)]
    edges = np.cumsum([0] + sizes)
    boundaries = tuple(
        (int(edges[j + 1]), int(edges[j + 1]), int(edges[j + 2])) for j in range(k)
    )
    return FoldPlan(k=k, boundaries=boundaries)
