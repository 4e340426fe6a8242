"""CART regression trees and bootstrap forests on flattened windows."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingSet
from .runtime import worker_threads

LEAF = -1


@dataclass(frozen=True)
class TreeSpec:
    max_depth: int = 12
    min_samples_leaf: int = 3

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ValueError(f"bad tree spec {self}")


@dataclass(frozen=True)
class ForestSpec:
    tree_count: int = 30
    max_depth: int = 12
    min_samples_leaf: int = 3
    bootstrap: bool = True
    feature_subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1 or not 0.0 < self.feature_subsample <= 1.0:
            raise ValueError(f"bad forest spec {self}")

    def tree_spec(self) -> TreeSpec:
        return TreeSpec(self.max_depth, self.min_samples_leaf)


@dataclass
class TreeModel:
    """Flat node arrays; children index into the arrays, LEAF marks none."""

    spec: TreeSpec
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            at_leaf = self.left[node] == LEAF
            if at_leaf.all():
                break
            live = ~at_leaf
            go_left = X[live, self.feature[node[live]]] <= self.threshold[node[live]]
            nxt = np.where(go_left, self.left[node[live]], self.right[node[live]])
            node[live] = nxt
        return self.value[node]


@dataclass
class ForestModel:
    spec: ForestSpec
    trees: list[TreeModel] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


def _best_split(X, y, min_leaf, feature_ids):
    """(reduction, feature, threshold) of the best variance-reduction split.

    Scans features in ascending index and thresholds in ascending value, so
    the first maximal candidate realizes the lowest-(feature, threshold)
    tie-break. Returns None when no split with positive reduction exists.
    """
    m = y.size
    Xs = X[:, feature_ids]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]

    csum = np.cumsum(ys, axis=0)
    csq = np.cumsum(ys * ys, axis=0)
    tot, tot_sq = csum[-1], csq[-1]

    i = np.arange(1, m)[:, None]  # left sizes at each cut
    sse_left = csq[:-1] - csum[:-1] ** 2 / i
    sse_right = (tot_sq - csq[:-1]) - (tot - csum[:-1]) ** 2 / (m - i)
    total = sse_left + sse_right

    invalid = xs[:-1] == xs[1:]  # no boundary between equal values
    if min_leaf > 1:
        sizes_ok = (i >= min_leaf) & (m - i >= min_leaf)
        invalid |= ~sizes_ok
    total = np.where(invalid, np.inf, total)

    # every column sorts the same y, so the parent SSE is shared
    parent = float(csq[-1, 0] - csum[-1, 0] ** 2 / m)

    flat = total.T.reshape(-1)  # feature-major: tie-break by feature then threshold
    best = int(np.argmin(flat))
    best_total = flat[best]
    if not np.isfinite(best_total):
        return None
    reduction = parent - float(best_total)
    if reduction <= 1e-12 * max(1.0, abs(parent)):
        return None
    f_local, cut = divmod(best, m - 1)
    feature = int(feature_ids[f_local])
    threshold = 0.5 * (xs[cut, f_local] + xs[cut + 1, f_local])
    return reduction, feature, float(threshold)


def tree_fit(X, y, spec: TreeSpec = TreeSpec(), rng: np.random.Generator | None = None,
             feature_subsample: float = 1.0) -> TreeModel:
    """Greedy variance-reduction CART with midpoint thresholds and mean leaves."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet(f"X shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y shape {y.shape} vs X {X.shape}")

    d = X.shape[1]
    n_sub = max(1, int(round(feature_subsample * d)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(LEAF)
        threshold.append(np.nan)
        left.append(LEAF)
        right.append(LEAF)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        value[node] = float(ys.mean())
        if depth >= spec.max_depth or idx.size < 2 * spec.min_samples_leaf or idx.size < 2:
            continue
        if n_sub < d:
            ids = np.sort(rng.choice(d, size=n_sub, replace=False))
        else:
            ids = np.arange(d)
        found = _best_split(X[idx], ys, spec.min_samples_leaf, ids)
        if found is None:
            continue
        _, f, thr = found
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        # push right first so nodes are assembled depth-first, left before right
        stack.append((r, idx[~go_left], depth + 1))
        stack.append((l, idx[go_left], depth + 1))

    return TreeModel(
        spec,
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(value, dtype=np.float64),
    )


def tree_predict(model: TreeModel, X) -> np.ndarray:
    return model.predict(X)


def forest_fit(X, y, spec: ForestSpec = ForestSpec()) -> ForestModel:
    """Average of seeded bootstrap CART trees with per-split feature sampling."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet(f"X shape {X.shape}")
    n = X.shape[0]
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.tree_count)

    def fit_one(k: int) -> TreeModel:
        rng = np.random.default_rng(seeds[k])
        idx = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
        return tree_fit(
            X[idx], y[idx], spec.tree_spec(), rng=rng,
            feature_subsample=spec.feature_subsample,
        )

    workers = min(worker_threads(), spec.tree_count)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(fit_one, range(spec.tree_count)))
    else:
        trees = [fit_one(k) for k in range(spec.tree_count)]
    return ForestModel(spec, trees)


def forest_predict(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)
