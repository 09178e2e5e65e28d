"""Outlier detection and mitigation for traffic series.

Two detectors: the three-sigma rule (points strictly outside mean +/- 3
population standard deviations; statistics over the full series) and an
isolation forest over the 1-D values. Mitigation replaces each flagged
point with the next unflagged value (backward filling); flagged points at
the tail fall back to the nearest preceding unflagged value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, ValidationError
from .series import TimeSeries
from .util import derive_seed
from .validation import as_float_vector

EULER_MASCHERONI = 0.5772156649

THREE_SIGMA = "three_sigma"
ISOLATION_FOREST = "isolation_forest"


@dataclass(frozen=True)
class OutlierReport:
    """Per-point outlier mask plus the detector's evidence."""

    method: str
    mask: np.ndarray = field(repr=False)
    lower_bound: float | None = None
    upper_bound: float | None = None
    scores: np.ndarray | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        if self.scores is not None:
            scores = np.asarray(self.scores, dtype=np.float64)
            if scores.shape != mask.shape:
                raise ValidationError("scores and mask must have equal length")
            scores.flags.writeable = False
            object.__setattr__(self, "scores", scores)

    @property
    def n_outliers(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class AgreementSummary:
    """Overlap between two detectors' masks."""

    jaccard: float
    count_a: int
    count_b: int
    overlap: int
    union: int
    method_a: str
    method_b: str


def three_sigma_detect(series: TimeSeries) -> OutlierReport:
    """Flag points strictly outside mean +/- 3 population standard deviations.

    Boundary points count as inliers; a constant series flags nothing.
    """
    if len(series) < 2:
        raise ValidationError("three-sigma detection needs at least 2 points")
    values = series.values
    mean = float(np.mean(values))
    std = float(np.std(values))  # population formula, divisor n
    lower = mean - 3.0 * std
    upper = mean + 3.0 * std
    mask = (values < lower) | (values > upper)
    return OutlierReport(
        method=THREE_SIGMA,
        mask=mask,
        lower_bound=lower,
        upper_bound=upper,
        params={"mean": mean, "std": std, "n_sigma": 3.0},
    )


def average_path_length(m: int) -> float:
    """Expected unsuccessful-search path length in a binary tree of m points."""
    if m <= 1:
        return 0.0
    harmonic = math.log(m - 1) + EULER_MASCHERONI
    return 2.0 * harmonic - 2.0 * (m - 1) / m


class _IsolationTree:
    """One random tree over a 1-D subsample.

    Because points are scalar, every leaf is an interval of the real line;
    the tree is stored as sorted interval boundaries plus the per-leaf path
    length (depth + size adjustment), so scoring a batch is a single
    searchsorted.
    """

    __slots__ = ("boundaries", "leaf_paths")

    def __init__(self, sample: np.ndarray, height_limit: int, rng: np.random.Generator):
        boundaries: list[float] = []
        leaf_paths: list[float] = []

        def split(points: np.ndarray, depth: int) -> None:
            lo = points[0]
            hi = points[-1]
            if depth >= height_limit or points.size <= 1 or lo == hi:
                leaf_paths.append(depth + average_path_length(points.size))
                return
            cut = rng.uniform(lo, hi)
            # Guard against the zero-width draw landing on an endpoint.
            if cut >= hi:
                cut = lo
            pos = int(np.searchsorted(points, cut, side="right"))
            if pos == 0 or pos == points.size:
                leaf_paths.append(depth + average_path_length(points.size))
                return
            split(points[:pos], depth + 1)
            boundaries.append(float(cut))
            split(points[pos:], depth + 1)

        split(np.sort(sample), 0)
        self.boundaries = np.array(sorted(boundaries), dtype=np.float64)
        self.leaf_paths = np.array(leaf_paths, dtype=np.float64)

    def path_lengths(self, values: np.ndarray) -> np.ndarray:
        # a value equal to a cut belongs to the left side, as at build time
        leaves = np.searchsorted(self.boundaries, values, side="left")
        return self.leaf_paths[leaves]


class IsolationForestDetector(BaseEstimator):
    """Isolation forest for univariate samples.

    Each of ``n_trees`` trees is grown on a seeded random subsample of size
    min(subsample_size, n); split values are drawn uniformly between the
    node's minimum and maximum; recursion stops at isolation, the height
    limit ceil(log2(subsample)), or a constant node. The anomaly score is
    2 ** (-mean_path_length / c(subsample)).
    """

    def __init__(
        self,
        n_trees: int = 100,
        subsample_size: int = 256,
        contamination: float | None = None,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.subsample_size = subsample_size
        self.contamination = contamination
        self.seed = seed

    def _check_params(self) -> None:
        if self.n_trees <= 0:
            raise ConfigError("n_trees must be positive")
        if self.subsample_size < 2:
            raise ConfigError("subsample_size must be at least 2")
        if self.contamination is not None and not 0.0 < self.contamination < 1.0:
            raise ConfigError("contamination must be in (0, 1)")

    def fit(self, values) -> "IsolationForestDetector":
        self._check_params()
        v = as_float_vector(values)
        if v.size < 8:
            raise ValidationError(f"isolation forest needs at least 8 points, got {v.size}")
        psi = min(self.subsample_size, v.size)
        height_limit = math.ceil(math.log2(psi)) if psi > 1 else 1
        trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(derive_seed(self.seed, t))
            sample = rng.choice(v, size=psi, replace=False)
            trees.append(_IsolationTree(sample, height_limit, rng))
        self.trees_ = trees
        self.psi_ = psi
        self.normalizer_ = average_path_length(psi)
        return self

    def score_samples(self, values) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise NotFittedError("IsolationForestDetector is not fitted")
        v = as_float_vector(values)
        total = np.zeros(v.size, dtype=np.float64)
        for tree in self.trees_:
            total += tree.path_lengths(v)
        mean_path = total / len(self.trees_)
        return np.power(2.0, -mean_path / self.normalizer_)

    def threshold_(self, scores: np.ndarray) -> float:
        if self.contamination is None:
            return 0.5
        return float(np.quantile(scores, 1.0 - self.contamination))


def iforest_detect(
    series: TimeSeries,
    n_trees: int = 100,
    subsample_size: int = 256,
    contamination: float | None = None,
    seed: int = 0,
) -> OutlierReport:
    """Score every point with an isolation forest and flag the top scores.

    The mask is scores >= 0.5 when no contamination is given, otherwise
    scores at or above the (1 - contamination) quantile.
    """
    detector = IsolationForestDetector(
        n_trees=n_trees,
        subsample_size=subsample_size,
        contamination=contamination,
        seed=seed,
    ).fit(series.values)
    scores = detector.score_samples(series.values)
    threshold = detector.threshold_(scores)
    mask = scores >= threshold
    return OutlierReport(
        method=ISOLATION_FOREST,
        mask=mask,
        scores=scores,
        params={
            "n_trees": n_trees,
            "subsample_size": detector.psi_,
            "contamination": contamination,
            "seed": seed,
            "threshold": threshold,
        },
    )


def backward_fill(series: TimeSeries, mask) -> TimeSeries:
    """Replace each flagged point with the next unflagged value.

    Flagged points at the tail, having no following valid point, take the
    nearest preceding unflagged value instead. Unflagged points are
    returned bit-identical.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 1 or m.size != len(series):
        raise ValidationError(
            f"mask length {m.size} does not match series length {len(series)}"
        )
    if m.all():
        raise ValidationError("cannot backward-fill: every point is flagged")
    if not m.any():
        return series
    n = m.size
    idx = np.arange(n)
    # Nearest unflagged index at or after each position (n = none).
    nxt = np.where(~m, idx, n)
    nxt = np.minimum.accumulate(nxt[::-1])[::-1]
    # Nearest unflagged index at or before each position (-1 = none).
    prv = np.where(~m, idx, -1)
    prv = np.maximum.accumulate(prv)
    donor = np.where(nxt < n, nxt, prv)
    values = series.values.copy()
    values[m] = series.values[donor[m]]
    return series.with_values(values)


def detector_agreement(a: OutlierReport, b: OutlierReport) -> AgreementSummary:
    """Jaccard index of two outlier masks plus per-method counts."""
    if a.mask.size != b.mask.size:
        raise ValidationError(
            f"length mismatch: masks have lengths {a.mask.size} and {b.mask.size}"
        )
    overlap = int((a.mask & b.mask).sum())
    union = int((a.mask | b.mask).sum())
    jaccard = 1.0 if union == 0 else overlap / union
    return AgreementSummary(
        jaccard=jaccard,
        count_a=a.n_outliers,
        count_b=b.n_outliers,
        overlap=overlap,
        union=union,
        method_a=a.method,
        method_b=b.method,
    )


def outlier_report_csv(series: TimeSeries, report: OutlierReport) -> bytes:
    """Render a report as ``index,timestamp,value,is_outlier,score_or_bound_violation``.

    The last column is the isolation score, or for three-sigma the distance
    by which the value exceeds the inlier band (zero inside it).
    """
    if report.mask.size != len(series):
        raise ValidationError("report does not match series length")
    if report.scores is not None:
        evidence = report.scores
    else:
        lo = report.lower_bound if report.lower_bound is not None else -math.inf
        hi = report.upper_bound if report.upper_bound is not None else math.inf
        values = series.values
        evidence = np.maximum(0.0, np.maximum(lo - values, values - hi))
    lines = ["index,timestamp,value,is_outlier,score_or_bound_violation"]
    for i in range(len(series)):
        flag = "true" if report.mask[i] else "false"
        lines.append(
            f"{i},{int(series.timestamps[i])},{float(series.values[i])!r},{flag},{float(evidence[i])!r}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")
