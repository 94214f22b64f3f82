"""Gaussian Naive Bayes, CART and random forest, written against numpy only.

Every model predicts the probability of the defective class (label 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from ..errors import ArityMismatch, Diagnostic, InsufficientData

Kind = Literal["NB", "DT", "RF"]

# relative slack when comparing split impurities, so float noise between
# features cannot override the index tie-break
_TIE = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    kind: Kind = "RF"
    max_depth: int | None = None
    min_samples_leaf: int = 1
    n_trees: int = 100
    max_features: int | None = None  # None means ceil(sqrt(p)) for RF and p for DT
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("NB", "DT", "RF"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")


def _check_xy(X, y=None) -> tuple[np.ndarray, np.ndarray | None]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ArityMismatch(f"expected a 2-D design, got shape {X.shape}")
    if y is None:
        return X, None
    y = np.asarray(y).astype(bool)
    if len(y) != len(X):
        raise ArityMismatch(f"{len(X)} rows but {len(y)} labels")
    return X, y


class _Fitted:
    n_features: int

    def _design(self, X) -> np.ndarray:
        X, _ = _check_xy(X)
        if X.shape[1] != self.n_features:
            raise ArityMismatch(f"model trained on {self.n_features} features, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X) >= 0.5


@dataclass(frozen=True)
class GaussianNB(_Fitted):
    n_features: int
    log_prior: np.ndarray  # (2,), index 0 = clean, 1 = defective
    means: np.ndarray  # (2, p)
    variances: np.ndarray  # (2, p)
    sole_class: int | None = None
    diagnostics: tuple[Diagnostic, ...] = ()

    def predict_proba(self, X) -> np.ndarray:
        X = self._design(X)
        if self.sole_class is not None:
            return np.full(len(X), float(self.sole_class))
        joint = np.empty((len(X), 2))
        for c in (0, 1):
            var = self.variances[c]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.means[c]) ** 2 / var)
            joint[:, c] = self.log_prior[c] + ll.sum(axis=1)
        return np.exp(joint[:, 1] - logsumexp(joint, axis=1))


def fit_naive_bayes(X, y) -> GaussianNB:
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n == 0:
        raise InsufficientData("cannot fit on zero rows")
    if y.all() or not y.any():
        sole = int(y[0])
        diag = Diagnostic("single-class-training", f"training set holds only class {sole}; predicting it for every row")
        zeros = np.zeros((2, p))
        return GaussianNB(p, np.zeros(2), zeros, np.ones((2, p)), sole, (diag,))
    floor = 1e-9 * float(X.var(axis=0).max())
    if floor <= 0.0:
        floor = 1e-9
    means = np.stack([X[~y].mean(axis=0), X[y].mean(axis=0)])
    variances = np.stack([X[~y].var(axis=0), X[y].var(axis=0)]) + floor
    prior = np.log(np.array([np.count_nonzero(~y), np.count_nonzero(y)], dtype=float) / n)
    return GaussianNB(p, prior, means, variances)


@dataclass(frozen=True)
class Tree(_Fitted):
    """Flat binary tree; a node is a leaf when ``feature`` is -1.

    Rows go left when their value is <= the node threshold.
    """

    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    defective: np.ndarray  # defective rows reaching the node during training
    count: np.ndarray  # all rows reaching the node during training
    depth: int

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row ends in."""
        X = self._design(X)
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict_proba(self, X) -> np.ndarray:
        leaf = self.apply(X)
        return (self.defective[leaf] + 1.0) / (self.count[leaf] + 2.0)


def _best_split(X, y, rows, candidates, min_leaf):
    """Best (impurity, feature, threshold) over ``candidates`` or None.

    Impurity is the size-weighted Gini sum of the two children. Ties go to the
    smaller feature index, then to the smaller threshold. All candidate
    features are scored in one vectorized pass.
    """
    cand = np.asarray(candidates, dtype=np.intp)
    n = len(rows)
    sub = X[rows][:, cand]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = sub[order, np.arange(len(cand))]
    ys = y[rows][order].astype(float)
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    pos_left = np.cumsum(ys, axis=0)[:-1]
    pos_right = float(ys[:, 0].sum()) - pos_left
    # n * gini = n - (pos^2 + neg^2) / n
    impurity = (
        n_left - (pos_left**2 + (n_left - pos_left) ** 2) / n_left
        + n_right - (pos_right**2 + (n_right - pos_right) ** 2) / n_right
    )
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf)
    per_feature = impurity.min(axis=0)
    best = float(per_feature.min())
    c = int(np.flatnonzero(per_feature <= best + _TIE * max(1.0, abs(best)))[0])
    k = int(np.argmin(impurity[:, c]))
    lo, hi = xs[k, c], xs[k + 1, c]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # adjacent floats: the midpoint rounds up
        threshold = lo
    return float(impurity[k, c]), int(cand[c]), float(threshold)


def grow_tree(
    X,
    y,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
    sample: np.ndarray | None = None,
) -> Tree:
    """Greedy CART growth.

    With ``max_features`` below p, each split evaluates a random subset of
    that size, drawing further features only when none of the subset can
    split the node. ``sample`` lists training row indices, duplicates allowed.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n == 0:
        raise InsufficientData("cannot fit on zero rows")
    m = p if max_features is None else min(max_features, p)
    if m < p and rng is None:
        raise ValueError("feature subsampling needs a random generator")
    feature, threshold, left, right, defective, count = [], [], [], [], [], []
    deepest = 0
    root = np.arange(n) if sample is None else np.asarray(sample, dtype=np.intp)
    stack = [(root, 0, -1, False)]
    while stack:
        rows, depth, parent, is_left = stack.pop()
        node = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node
        d = int(np.count_nonzero(y[rows]))
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        defective.append(d)
        count.append(len(rows))
        deepest = max(deepest, depth)
        if d == 0 or d == len(rows) or len(rows) < 2 * min_samples_leaf:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if m < p:
            order = rng.permutation(p)
            split = _best_split(X, y, rows, np.sort(order[:m]), min_samples_leaf)
            for j in order[m:]:
                if split is not None:
                    break
                split = _best_split(X, y, rows, [j], min_samples_leaf)
        else:
            split = _best_split(X, y, rows, range(p), min_samples_leaf)
        if split is None:
            continue
        _, j, t = split
        feature[node], threshold[node] = j, t
        go_left = X[rows, j] <= t
        # right child pushed first so the left subtree gets the lower indices
        stack.append((rows[~go_left], depth + 1, node, False))
        stack.append((rows[go_left], depth + 1, node, True))
    return Tree(
        p,
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(defective, dtype=float),
        np.array(count, dtype=float),
        deepest,
    )


@dataclass(frozen=True)
class Forest(_Fitted):
    """Trees are also merged into one node table so a batch of rows walks
    every tree in the same vectorized pass."""

    n_features: int
    trees: tuple[Tree, ...] = field(repr=False)

    @cached_property
    def _merged(self):
        sizes = [len(t.feature) for t in self.trees]
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)

        def shifted(child, base):
            return np.where(child >= 0, child + base, -1)

        feature = np.concatenate([t.feature for t in self.trees])
        threshold = np.concatenate([t.threshold for t in self.trees])
        left = np.concatenate([shifted(t.left, b) for t, b in zip(self.trees, roots)])
        right = np.concatenate([shifted(t.right, b) for t, b in zip(self.trees, roots)])
        prob = np.concatenate([(t.defective + 1.0) / (t.count + 2.0) for t in self.trees])
        return roots, feature, threshold, left, right, prob, max(t.depth for t in self.trees)

    def predict_proba(self, X) -> np.ndarray:
        X = self._design(X)
        roots, feature, threshold, left, right, prob, depth = self._merged
        node = np.repeat(roots[:, None], len(X), axis=1)
        cols = np.arange(len(X))[None, :]
        for _ in range(depth):
            f = feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[cols, np.where(inner, f, 0)] <= threshold[node]
            node = np.where(inner, np.where(go_left, left[node], right[node]), node)
        return prob[node].mean(axis=0)


def fit_forest(
    X,
    y,
    n_trees: int = 100,
    max_features: int | None = None,
    bootstrap: bool = True,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    seed: int = 0,
) -> Forest:
    X, y = _check_xy(X, y)
    n, p = X.shape
    m = math.ceil(math.sqrt(p)) if max_features is None else max_features
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        sample = rng.integers(0, n, size=n) if bootstrap else None
        trees.append(grow_tree(X, y, max_depth, min_samples_leaf, m, rng, sample))
    return Forest(p, tuple(trees))


Model = GaussianNB | Tree | Forest


def fit(spec: ModelSpec, X, y) -> Model:
    if spec.kind == "NB":
        return fit_naive_bayes(X, y)
    if spec.kind == "DT":
        return grow_tree(X, y, spec.max_depth, spec.min_samples_leaf, spec.max_features,
                         np.random.default_rng(spec.seed) if spec.max_features else None)
    return fit_forest(X, y, spec.n_trees, spec.max_features, spec.bootstrap, spec.max_depth,
                      spec.min_samples_leaf, spec.seed)


def predict_proba(model: Model, X) -> np.ndarray:
    return model.predict_proba(X)
