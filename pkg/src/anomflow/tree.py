"""Regression trees for boosting: variance-reduction split search.

Two split-finding modes share one scan kernel. Exact mode considers every
midpoint between consecutive distinct values of a feature. Histogram mode
bins each feature once, at fit time, into equal-width bins over its
training range; candidate splits are the bin boundaries, and the recorded
threshold is the midpoint of the two node values straddling the chosen
boundary, so a binning fine enough to separate all distinct values
reproduces exact mode bit for bit.

Both modes accumulate statistics per value-group (or per bin) and then
scan prefix sums, so their arithmetic is identical when groups coincide.
Ties are broken toward the smallest threshold, then the smallest feature
index; zero-gain splits are never emitted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .validation import as_float_vector, check_same_length

EXACT = "exact"
HISTOGRAM = "histogram"
SPLIT_MODES = (EXACT, HISTOGRAM)


@dataclass
class TreeNode:
    """Binary regression tree node; a node with no children is a leaf."""

    value: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _scan_boundaries(counts, sums, sqsums, min_samples_leaf):
    """Best boundary between ordered groups by variance reduction.

    Returns (boundary_index, gain) with gain > 0, or None. Boundary i sits
    between groups i and i+1; ties resolve to the smallest index.
    """
    cn = np.cumsum(counts)
    cs = np.cumsum(sums)
    cq = np.cumsum(sqsums)
    n = cn[-1]
    total_s = cs[-1]
    total_q = cq[-1]
    parent_var = total_q / n - (total_s / n) ** 2
    nl = cn[:-1]
    nr = n - nl
    valid = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        var_l = cq[:-1] / nl - (cs[:-1] / nl) ** 2
        var_r = (total_q - cq[:-1]) / nr - ((total_s - cs[:-1]) / nr) ** 2
        gains = parent_var - (nl * var_l + nr * var_r) / n
    gains = np.where(valid, gains, -np.inf)
    best = int(np.argmax(gains))
    gain = float(gains[best])
    if gain <= 0.0:
        return None
    return best, gain


def _group_by_value(values_sorted, residuals_sorted):
    """Per-distinct-value counts and residual sums over a sorted column."""
    n = values_sorted.size
    change = np.flatnonzero(values_sorted[1:] != values_sorted[:-1]) + 1
    starts = np.concatenate(([0], change))
    counts = np.diff(np.concatenate((starts, [n])))
    sums = np.add.reduceat(residuals_sorted, starts)
    sqsums = np.add.reduceat(residuals_sorted * residuals_sorted, starts)
    return starts, counts, sums, sqsums


def _midpoint(lo: float, hi: float) -> float:
    """Midpoint that never crosses to the upper value under rounding."""
    mid = (lo + hi) / 2.0
    return lo if mid >= hi else mid


def _best_split_sorted(values_sorted, residuals_sorted, min_samples_leaf):
    n = values_sorted.size
    if n < 2 or n < 2 * min_samples_leaf:
        return None
    starts, counts, sums, sqsums = _group_by_value(values_sorted, residuals_sorted)
    if counts.size < 2:
        return None  # constant column
    hit = _scan_boundaries(counts, sums, sqsums, min_samples_leaf)
    if hit is None:
        return None
    b, gain = hit
    left_max = float(values_sorted[starts[b + 1] - 1])
    right_min = float(values_sorted[starts[b + 1]])
    return _midpoint(left_max, right_min), gain


def find_best_split(column, residuals, min_samples_leaf: int = 1):
    """Exact-mode split search over one feature column.

    Maximizes variance reduction over all midpoints between consecutive
    distinct values; resolves gain ties toward the smallest threshold.
    Returns (threshold, gain) or None when no split with positive gain
    satisfies ``min_samples_leaf``.
    """
    col = as_float_vector(column, "column")
    res = as_float_vector(residuals, "residuals")
    check_same_length(col, res, "column and residuals")
    if min_samples_leaf < 1:
        raise ConfigError("min_samples_leaf must be at least 1")
    order = np.argsort(col, kind="stable")
    return _best_split_sorted(col[order], res[order], min_samples_leaf)


class TreeGrower:
    """Grows trees repeatedly over fixed features and changing residuals.

    The per-feature sort orders (exact mode) or bin codes (histogram mode)
    are computed once and reused for every boosting stage.
    """

    def __init__(self, X, max_depth: int, min_samples_leaf: int, split_mode: str, n_bins: int):
        if split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}, got {split_mode!r}")
        if max_depth < 1:
            raise ConfigError("max_depth must be at least 1")
        if min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be at least 1")
        self.n, self.n_features = X.shape
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.split_mode = split_mode
        # contiguous per-column copies keep the per-node gathers cheap
        self.columns = [np.ascontiguousarray(X[:, f]) for f in range(self.n_features)]
        if split_mode == EXACT:
            self.orders = [np.argsort(col, kind="stable") for col in self.columns]
        else:
            if n_bins < 2:
                raise ConfigError("n_bins must be at least 2 in histogram mode")
            self.n_bins = n_bins
            self.codes = []
            for col in self.columns:
                lo = float(col.min())
                hi = float(col.max())
                if hi > lo:
                    edges = lo + (hi - lo) / n_bins * np.arange(1, n_bins)
                    codes = np.searchsorted(edges, col, side="left").astype(np.int64)
                else:
                    codes = np.zeros(self.n, dtype=np.int64)
                self.codes.append(codes)

    def grow(self, residuals) -> tuple[TreeNode, np.ndarray]:
        """Fit one tree to the residuals; also returns its training output."""
        out = np.empty(self.n, dtype=np.float64)
        root = self._split_node(np.arange(self.n), residuals, 0, out)
        return root, out

    def _split_node(self, idx, residuals, depth, out) -> TreeNode:
        res_node = residuals[idx]
        if depth < self.max_depth and idx.size >= 2 * self.min_samples_leaf:
            found = self._best_split(idx, residuals, res_node)
            if found is not None:
                feature, threshold = found
                go_left = self.columns[feature][idx] <= threshold
                node = TreeNode(feature=feature, threshold=threshold)
                node.left = self._split_node(idx[go_left], residuals, depth + 1, out)
                node.right = self._split_node(idx[~go_left], residuals, depth + 1, out)
                return node
        value = float(res_node.mean())
        out[idx] = value
        return TreeNode(value=value)

    def _best_split(self, idx, residuals, res_node):
        if self.split_mode == EXACT:
            return self._best_split_exact(idx, residuals)
        return self._best_split_histogram(idx, res_node)

    def _best_split_exact(self, idx, residuals):
        membership = np.zeros(self.n, dtype=bool)
        membership[idx] = True
        best = None  # (gain, feature, threshold)
        for f in range(self.n_features):
            order = self.orders[f]
            sel = order[membership[order]]
            hit = _best_split_sorted(self.columns[f][sel], residuals[sel], self.min_samples_leaf)
            if hit is not None and (best is None or hit[1] > best[0]):
                best = (hit[1], f, hit[0])
        if best is None:
            return None
        return best[1], best[2]

    def _best_split_histogram(self, idx, res_node):
        res_sq = res_node * res_node
        best = None  # (gain, feature, boundary)
        for f in range(self.n_features):
            codes = self.codes[f][idx]
            counts = np.bincount(codes, minlength=self.n_bins)
            sums = np.bincount(codes, weights=res_node, minlength=self.n_bins)
            sqsums = np.bincount(codes, weights=res_sq, minlength=self.n_bins)
            hit = _scan_boundaries(counts, sums, sqsums, self.min_samples_leaf)
            if hit is not None and (best is None or hit[1] > best[0]):
                best = (hit[1], f, hit[0])
        if best is None:
            return None
        _, f, boundary = best
        codes = self.codes[f][idx]
        vals = self.columns[f][idx]
        left_sel = codes <= boundary
        threshold = _midpoint(float(vals[left_sel].max()), float(vals[~left_sel].min()))
        return f, threshold


def apply_tree(node: TreeNode, X) -> np.ndarray:
    """Evaluate a tree on a feature matrix."""
    out = np.empty(X.shape[0], dtype=np.float64)
    _apply(node, X, np.arange(X.shape[0]), out)
    return out


def _apply(node: TreeNode, X, idx, out) -> None:
    if node.is_leaf:
        out[idx] = node.value
        return
    go_left = X[idx, node.feature] <= node.threshold
    _apply(node.left, X, idx[go_left], out)
    _apply(node.right, X, idx[~go_left], out)
