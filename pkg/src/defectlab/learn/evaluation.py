"""Stratified folds, scoring, cross-validation and permutation importance."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArityMismatch, Diagnostic, InsufficientData, TooFewSamples
from ..stats import average_ranks
from .models import ModelSpec, fit

logger = logging.getLogger(__name__)


def stratified_folds(labels, k: int = 10, seed: int = 0) -> np.ndarray:
    """Fold index per row.

    Each class is shuffled and dealt round-robin, the dealing position
    carrying over from one class to the next so fold sizes also stay within
    one of each other. k drops to the minority count when that is smaller.
    """
    y = np.asarray(labels).astype(bool)
    if k < 2:
        raise ValueError("k must be >= 2")
    minority = min(np.count_nonzero(y), np.count_nonzero(~y))
    if minority < 2:
        raise TooFewSamples(f"minority class has {minority} rows; stratified folds need at least 2")
    if minority < k:
        logger.warning("reducing folds from %d to %d (minority class size)", k, minority)
        k = minority
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.intp)
    offset = 0
    for cls in (True, False):
        members = rng.permutation(np.flatnonzero(y == cls))
        folds[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return folds


def auc(scores, truth) -> float:
    """Probability that a random positive outscores a random negative, ties half."""
    s = np.asarray(scores, dtype=float)
    t = np.asarray(truth).astype(bool)
    n_pos, n_neg = np.count_nonzero(t), np.count_nonzero(~t)
    if n_pos == 0 or n_neg == 0:
        raise InsufficientData("AUC needs both classes in the truth")
    ranks = average_ranks(s)
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ScoreReport:
    precision_minority: float
    recall_minority: float
    f_minority: float
    auc_weighted: float
    confusion: tuple[int, int, int, int]  # tp, fp, tn, fn
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def value(self, metric: str) -> float:
        return {"f_minority": self.f_minority, "auc_weighted": self.auc_weighted,
                "precision": self.precision_minority, "recall": self.recall_minority}[metric]


def score(probs, truth) -> ScoreReport:
    """Minority-class precision/recall/F plus support-weighted one-vs-rest AUC."""
    p = np.asarray(probs, dtype=float)
    t = np.asarray(truth).astype(bool)
    if len(p) != len(t) or len(p) == 0:
        raise ArityMismatch(f"{len(p)} probabilities for {len(t)} labels")
    hard = p >= 0.5
    tp = int(np.count_nonzero(hard & t))
    fp = int(np.count_nonzero(hard & ~t))
    tn = int(np.count_nonzero(~hard & ~t))
    fn = int(np.count_nonzero(~hard & t))
    diagnostics = []
    precision = tp / (tp + fp) if tp + fp else 0.0
    if tp + fn == 0:
        diagnostics.append(Diagnostic("no-positive-truth", "no defective rows in truth; recall reported as 0"))
        recall = 0.0
    else:
        recall = tp / (tp + fn)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    n_pos, n = int(np.count_nonzero(t)), len(t)
    if 0 < n_pos < n:
        auc_pos = auc(p, t)
        auc_neg = auc(1.0 - p, ~t)
        weighted = (n_pos / n) * auc_pos + ((n - n_pos) / n) * auc_neg
    else:
        diagnostics.append(Diagnostic("single-class-truth", "truth holds one class; AUC reported as 0.5"))
        weighted = 0.5
    return ScoreReport(precision, recall, f, weighted, (tp, fp, tn, fn), tuple(diagnostics))


def _xy(data, features):
    if hasattr(data, "matrix"):
        return data.matrix(features), data.labels
    X, y = data
    return np.asarray(X, dtype=float), np.asarray(y).astype(bool)


def cross_validate(data, spec: ModelSpec, k: int = 10, seed: int = 0, features: Sequence[str] | None = None) -> list[ScoreReport]:
    """One ScoreReport per held-out fold.

    ``data`` is a Dataset (optionally narrowed to ``features``) or an
    ``(X, y)`` pair.
    """
    X, y = _xy(data, features)
    folds = stratified_folds(y, k, seed)
    reports = []
    for f in range(folds.max() + 1):
        test = folds == f
        model = fit(spec, X[~test], y[~test])
        reports.append(score(model.predict_proba(X[test]), y[test]))
    return reports


@dataclass(frozen=True)
class ImportanceRanking:
    features: tuple[str, ...]
    importance: tuple[float, ...]
    ranks: tuple[float, ...]

    def __post_init__(self):
        if not len(self.features) == len(self.importance) == len(self.ranks):
            raise ArityMismatch("features, importance and ranks differ in length")

    @classmethod
    def from_importance(cls, features: Sequence[str], importance: Sequence[float]) -> ImportanceRanking:
        ranks = average_ranks(-np.asarray(importance, dtype=float))
        return cls(tuple(features), tuple(float(v) for v in importance), tuple(float(r) for r in ranks))

    def rank_of(self, feature: str) -> float:
        return self.ranks[self.features.index(feature)]

    def importance_of(self, feature: str) -> float:
        return self.importance[self.features.index(feature)]


def permutation_importance(
    data,
    spec: ModelSpec,
    features: Sequence[str] | None = None,
    k: int = 10,
    repeats: int = 10,
    seed: int = 0,
    scoring: str = "auc_weighted",
) -> ImportanceRanking:
    """Mean held-out score drop when one feature's test column is shuffled.

    Runs its own seeded stratified folds. ``data`` may be a Dataset or an
    ``(X, y)`` pair, in which case ``features`` only names the columns.
    """
    X, y = _xy(data, features)
    names = tuple(features) if features is not None else tuple(getattr(data, "feature_names", range(X.shape[1])))
    if len(names) != X.shape[1]:
        raise ArityMismatch(f"{len(names)} feature names for {X.shape[1]} columns")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    folds = stratified_folds(y, k, seed)
    drops = np.zeros(X.shape[1])
    n_folds = folds.max() + 1
    for f in range(n_folds):
        test = folds == f
        model = fit(spec, X[~test], y[~test])
        X_test, y_test = X[test], y[test]
        baseline = score(model.predict_proba(X_test), y_test).value(scoring)
        for j in range(X.shape[1]):
            shuffled = X_test.copy()
            for r in range(repeats):
                rng = np.random.default_rng([seed, f, j, r])
                shuffled[:, j] = rng.permutation(X_test[:, j])
                drops[j] += baseline - score(model.predict_proba(shuffled), y_test).value(scoring)
    return ImportanceRanking.from_importance(names, drops / (n_folds * repeats))


@dataclass(frozen=True)
class RankSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    n: int

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.minimum, self.q1, self.median, self.q3, self.maximum


def five_numbers(values: Sequence[float]) -> RankSummary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientData("empty sample")
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return RankSummary(*(float(x) for x in q), n=int(v.size))


def aggregate_rankings(rankings: Sequence[ImportanceRanking]) -> dict[str, RankSummary]:
    """Per-metric spread of ranks over projects (quartiles by linear interpolation).

    A metric missing from some projects is summarized over the rest.
    """
    if not rankings:
        raise InsufficientData("need at least one project ranking")
    per_metric: dict[str, list[float]] = {}
    for ranking in rankings:
        for name, rank in zip(ranking.features, ranking.ranks):
            per_metric.setdefault(name, []).append(rank)
    return {name: five_numbers(ranks) for name, ranks in per_metric.items()}
