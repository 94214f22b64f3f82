"""Classifiers, cross-validation, scoring and permutation importance."""

from .evaluation import (
    ImportanceRanking,
    RankSummary,
    ScoreReport,
    aggregate_rankings,
    auc,
    cross_validate,
    five_numbers,
    permutation_importance,
    score,
    stratified_folds,
)
from .models import Forest, GaussianNB, ModelSpec, Tree, fit, fit_forest, fit_naive_bayes, grow_tree, predict_proba

__all__ = [
    "Forest", "GaussianNB", "ImportanceRanking", "ModelSpec", "RankSummary", "ScoreReport", "Tree",
    "aggregate_rankings", "auc", "cross_validate", "fit", "fit_forest", "fit_naive_bayes",
    "five_numbers", "grow_tree", "permutation_importance", "predict_proba", "score", "stratified_folds",
]
