"""Decision trees from scratch: CART, random forest, gradient boosting.

The forest supplies mean-decrease-in-impurity scores, the boosted
ensemble supplies total split gain, and the two rankings fuse by average
rank position into the selected feature list.

Split search walks each candidate feature in column order; the best
(feature, threshold) pair wins by strictly larger criterion value, so
ties keep the earliest feature and, within a feature, the lowest
threshold (the kernels guarantee the latter).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dataset import Dataset, N_CLASSES
from .errors import DataError, LineageError


def _forbid_heldout(D: Dataset, op: str):
    # importance fitting must only ever see training data
    if D.role in ("validation", "test"):
        raise LineageError(f"{op} refuses {D.role!r} data")


@dataclass
class DecisionTree:
    """Array-of-struct tree: node i splits on ``feature[i]`` at
    ``threshold[i]`` (rows with value <= threshold go left), or is a leaf
    when feature[i] < 0. ``value`` holds the leaf class distribution for
    classifier trees and the leaf score for regression trees."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    impurity: np.ndarray
    decrease: np.ndarray
    n_samples: np.ndarray
    value: np.ndarray
    kind: str  # "classifier" | "regression"

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            fa = f[rows]
            goes_left = X[rows, fa] <= self.threshold[node[rows]]
            node[rows] = np.where(
                goes_left, self.left[node[rows]], self.right[node[rows]]
            )

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        if self.kind != "classifier":
            raise DataError("predict requires a classifier tree")
        return np.argmax(self.predict_value(X), axis=1)


@dataclass
class TreeEnsemble:
    trees: list
    kind: str  # "forest" | "boosted"
    feature_names: list
    learning_rate: float = 0.0
    base_logits: np.ndarray | None = None
    oob_masks: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        if self.kind == "forest":
            votes = np.zeros((np.asarray(X).shape[0], N_CLASSES), dtype=np.int64)
            for t in self.trees:
                pred = t.predict(X)
                votes[np.arange(votes.shape[0]), pred] += 1
            return np.argmax(votes, axis=1)  # vote ties: lowest class index
        return np.argmax(self.decision_function(X), axis=1)

    def decision_function(self, X) -> np.ndarray:
        if self.kind != "boosted":
            raise DataError("decision_function requires a boosted ensemble")
        X = np.asarray(X, dtype=np.float64)
        logits = np.tile(self.base_logits, (X.shape[0], 1))
        for r, group in enumerate(self.trees):
            for c, tree in enumerate(group):
                logits[:, c] += self.learning_rate * tree.predict_value(X)
        return logits


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.impurity = []
        self.decrease = []
        self.n_samples = []
        self.value = []

    def add(self, impurity, n, value):
        i = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.impurity.append(impurity)
        self.decrease.append(0.0)
        self.n_samples.append(n)
        self.value.append(value)
        return i

    def finish(self, kind) -> DecisionTree:
        return DecisionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            impurity=np.array(self.impurity),
            decrease=np.array(self.decrease),
            n_samples=np.array(self.n_samples, dtype=np.int64),
            value=np.array(self.value),
            kind=kind,
        )


def _gini(counts):
    n = counts.sum()
    return 1.0 - float((counts * counts).sum()) / (n * n) if n else 0.0


def _pick_features(n_features, subset_size, rng):
    if subset_size is None or subset_size >= n_features:
        return np.arange(n_features)
    return rng.choice(n_features, size=subset_size, replace=False)


def fit_cart(D: Dataset, max_depth=None, min_samples_leaf=1,
             feature_subset_size=None, seed=0, _rng=None) -> DecisionTree:
    """Greedy Gini CART on the dataset's design matrix."""
    _forbid_heldout(D, "fit_cart")
    if D.n_rows == 0:
        raise DataError("cannot fit a tree on an empty dataset")
    return _fit_cart_arrays(
        D.X, D.y, max_depth, min_samples_leaf, feature_subset_size,
        _rng if _rng is not None else np.random.default_rng(
            np.random.SeedSequence(entropy=seed)
        ),
    )


def _fit_cart_arrays(X, y, max_depth, min_samples_leaf, subset, rng):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    b = _TreeBuilder()
    depth_cap = np.inf if max_depth is None else max_depth
    stack = [(np.arange(X.shape[0]), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        counts = np.bincount(y[idx], minlength=N_CLASSES).astype(np.float64)
        node = b.add(_gini(counts), idx.size, counts / idx.size)
        if parent >= 0:
            (b.left if is_left else b.right)[parent] = node
        pure = counts.max() == idx.size
        if depth >= depth_cap or pure or idx.size < 2 * min_samples_leaf:
            continue
        feats = _pick_features(X.shape[1], subset, rng)
        sub = X[np.ix_(idx, feats)]
        order = np.argsort(sub, axis=0, kind="stable")
        labels = y[idx]
        best = (-1.0, -1, 0.0)
        for j, f in enumerate(feats):
            vals = np.ascontiguousarray(sub[order[:, j], j])
            labs = np.ascontiguousarray(labels[order[:, j]])
            found, thr, dec = _kernels.best_gini_split(
                vals, labs, N_CLASSES, min_samples_leaf
            )
            if found and dec > best[0]:
                best = (dec, int(f), thr)
        if best[1] < 0:
            continue
        dec, f, thr = best
        b.feature[node] = f
        b.threshold[node] = thr
        b.decrease[node] = dec
        goes_left = X[idx, f] <= thr
        # push right first so the left child is built next (stable ids)
        stack.append((idx[~goes_left], depth + 1, node, False))
        stack.append((idx[goes_left], depth + 1, node, True))
    return b.finish("classifier")


def fit_random_forest(D: Dataset, n_trees=60, max_depth=14,
                      min_samples_leaf=2, feature_subset_size="sqrt",
                      bootstrap=True, seed=0) -> TreeEnsemble:
    """Bootstrap forest with per-split feature subsets."""
    _forbid_heldout(D, "fit_random_forest")
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    if D.n_rows == 0:
        raise DataError("cannot fit a forest on an empty dataset")
    if feature_subset_size == "sqrt":
        feature_subset_size = max(1, int(np.sqrt(D.n_features)))
    seqs = np.random.SeedSequence(entropy=seed).spawn(n_trees)
    trees = []
    oob = []
    for s in seqs:
        rng = np.random.default_rng(s)
        if bootstrap:
            rows = rng.integers(0, D.n_rows, size=D.n_rows)
            mask = np.ones(D.n_rows, dtype=bool)
            mask[rows] = False
        else:
            rows = np.arange(D.n_rows)
            mask = np.zeros(D.n_rows, dtype=bool)
        trees.append(
            _fit_cart_arrays(D.X[rows], D.y[rows], max_depth,
                             min_samples_leaf, feature_subset_size, rng)
        )
        oob.append(mask)
    return TreeEnsemble(trees=trees, kind="forest",
                        feature_names=list(D.feature_names), oob_masks=oob)


def _fit_regression_tree(X, grad, hess, max_depth, min_samples_leaf, lam,
                         sorted_cols):
    """Gain-greedy regression tree.

    ``sorted_cols`` holds one row-index array per feature, sorted by that
    feature's value over the whole matrix; splits partition these arrays
    with a boolean membership mask, which keeps every node's candidate
    scan presorted without re-sorting.
    """
    b = _TreeBuilder()
    stack = [(sorted_cols, 0, -1, False)]
    while stack:
        cols, depth, parent, is_left = stack.pop()
        idx = cols[0]
        G = grad[idx].sum()
        H = hess[idx].sum()
        node = b.add(0.0, idx.size, -G / (H + lam))
        if parent >= 0:
            (b.left if is_left else b.right)[parent] = node
        if depth >= max_depth or idx.size < 2 * min_samples_leaf:
            continue
        best = (0.0, -1, 0.0)
        for f in range(X.shape[1]):
            order = cols[f]
            vals = np.ascontiguousarray(X[order, f])
            found, thr, gain = _kernels.best_gain_split(
                vals, np.ascontiguousarray(grad[order]),
                np.ascontiguousarray(hess[order]), lam, min_samples_leaf
            )
            if found and gain > best[0]:
                best = (gain, f, thr)
        if best[1] < 0:
            continue  # no strictly positive gain: keep the leaf
        gain, f, thr = best
        b.feature[node] = f
        b.threshold[node] = thr
        b.decrease[node] = gain
        in_left = np.zeros(X.shape[0], dtype=bool)
        in_left[idx[X[idx, f] <= thr]] = True
        left_cols = [c[in_left[c]] for c in cols]
        right_cols = [c[~in_left[c]] for c in cols]
        stack.append((right_cols, depth + 1, node, False))
        stack.append((left_cols, depth + 1, node, True))
    return b.finish("regression")


def fit_gbt(D: Dataset, n_rounds=40, learning_rate=0.1, max_depth=4,
            min_samples_leaf=5, lam=1.0) -> TreeEnsemble:
    """Multiclass gradient boosting with second-order leaf values.

    Per round, one regression tree per class is fit to the softmax
    cross-entropy gradients g = p - 1[y=c] with diagonal Hessians
    h = p(1-p); leaves take the Newton step -G/(H+lam). Fitting is
    deterministic: every tree sees all rows and all features.
    """
    _forbid_heldout(D, "fit_gbt")
    if n_rounds < 1:
        raise DataError("n_rounds must be >= 1")
    if D.n_rows == 0:
        raise DataError("cannot fit a boosted ensemble on an empty dataset")
    X = np.ascontiguousarray(D.X, dtype=np.float64)
    y = D.y
    n = X.shape[0]
    prior = np.bincount(y, minlength=N_CLASSES).astype(np.float64) / n
    base = np.log(np.clip(prior, 1e-12, None))
    logits = np.tile(base, (n, 1))
    onehot = np.zeros((n, N_CLASSES))
    onehot[np.arange(n), y] = 1.0
    base_order = np.argsort(X, axis=0, kind="stable")
    sorted_cols = [np.ascontiguousarray(base_order[:, f]) for f in range(X.shape[1])]
    rounds = []
    for _ in range(n_rounds):
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        group = []
        for c in range(N_CLASSES):
            grad = p[:, c] - onehot[:, c]
            hess = p[:, c] * (1.0 - p[:, c])
            tree = _fit_regression_tree(X, grad, hess, max_depth,
                                        min_samples_leaf, lam, sorted_cols)
            group.append(tree)
            logits[:, c] += learning_rate * tree.predict_value(X)
        rounds.append(group)
    return TreeEnsemble(trees=rounds, kind="boosted",
                        feature_names=list(D.feature_names),
                        learning_rate=learning_rate, base_logits=base)


@dataclass(frozen=True)
class ImportanceRanking:
    feature_names: tuple
    scores: tuple

    def __post_init__(self):
        if len(self.feature_names) != len(self.scores):
            raise DataError("names and scores must align")
        if any(s < 0 for s in self.scores):
            raise DataError("importance scores must be nonnegative")
        if abs(sum(self.scores) - 1.0) > 1e-9:
            raise DataError("importance scores must sum to 1")

    def ranked(self):
        """Feature names by descending score; score ties break by name."""
        return [
            n for n, _ in sorted(
                zip(self.feature_names, self.scores), key=lambda t: (-t[1], t[0])
            )
        ]

    def rank_positions(self):
        return {name: i + 1 for i, name in enumerate(self.ranked())}


def _normalize(names, totals):
    total = totals.sum()
    if total <= 0:
        raise DataError("no splits recorded; importance is undefined")
    return ImportanceRanking(tuple(names), tuple(totals / total))


def mdi_importance(ens: TreeEnsemble) -> ImportanceRanking:
    """Mean decrease in impurity over the forest, normalized to sum 1.

    A split's contribution is its node-level impurity decrease weighted
    by the fraction of the tree's root samples reaching that node,
    averaged across trees.
    """
    if ens.kind != "forest":
        raise DataError("MDI importance requires a forest ensemble")
    totals = np.zeros(len(ens.feature_names))
    for tree in ens.trees:
        root_n = tree.n_samples[0]
        split = tree.feature >= 0
        np.add.at(
            totals, tree.feature[split],
            tree.decrease[split] * tree.n_samples[split] / root_n / len(ens.trees),
        )
    return _normalize(ens.feature_names, totals)


def gain_importance(ens: TreeEnsemble) -> ImportanceRanking:
    """Total split gain per feature over the boosted rounds, sum 1."""
    if ens.kind != "boosted":
        raise DataError("gain importance requires a boosted ensemble")
    totals = np.zeros(len(ens.feature_names))
    for group in ens.trees:
        for tree in group:
            split = tree.feature >= 0
            np.add.at(totals, tree.feature[split], tree.decrease[split])
    return _normalize(ens.feature_names, totals)


def combined_rank(a: ImportanceRanking, b: ImportanceRanking, k: int):
    """Top-k features by mean rank position across the two rankings.

    Ties on the mean rank break lexicographically by feature name. The
    fusion reads only rank positions, so it is invariant under positive
    monotone rescaling of either ranking's scores.
    """
    if set(a.feature_names) != set(b.feature_names):
        raise DataError("rankings cover different feature universes")
    if not 1 <= k <= len(a.feature_names):
        raise DataError("k must lie in [1, n_features]")
    ra = a.rank_positions()
    rb = b.rank_positions()
    fused = sorted(ra, key=lambda n: ((ra[n] + rb[n]) / 2.0, n))
    return fused[:k]
