"""Least squares, VIF screening and rank-based two-/k-sample tests."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import chdtrc

from .errors import DegenerateResponse, InsufficientData

logger = logging.getLogger(__name__)

INVESTIGATE = 2.5
SEVERE = 10.0

# RFC and WMC are dropped before importance analysis; these nine remain
IMPORTANCE_CANDIDATES = ("LCOM5", "NLE", "CBO", "CBOI", "CD", "DIT", "NOC", "NPA", "NPM")
A_PRIORI_EXCLUDED = ("RFC", "WMC")

_PERFECT_FIT = 1e-10


def ols_fit(X, y) -> tuple[np.ndarray, float]:
    """Least-squares fit of ``y`` on ``X`` with an intercept column prepended.

    Returns ``(coefficients, r_squared)`` where ``coefficients[0]`` is the
    intercept. Rank-deficient designs get the minimum-norm solution.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n <= p:
        raise InsufficientData(f"need more rows than columns, got {n}x{p}")
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    if ss_tot <= 0.0:
        raise DegenerateResponse("response has zero variance")
    design = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return coef, r2


def vif_flag(vif: float, investigate: float = INVESTIGATE, severe: float = SEVERE) -> str:
    if vif >= severe:
        return "severe"
    if vif >= investigate:
        return "investigate"
    return "ok"


@dataclass(frozen=True)
class VifReport:
    vif: Mapping[str, float]
    flags: Mapping[str, str]
    degenerate: tuple[str, ...] = ()
    thresholds: tuple[float, float] = (INVESTIGATE, SEVERE)

    @property
    def features(self) -> list[str]:
        return list(self.vif) + list(self.degenerate)

    def rows(self) -> list[tuple[str, str, str]]:
        out = [(name, "inf" if math.isinf(v) else f"{v:.6f}", self.flags[name]) for name, v in self.vif.items()]
        out.extend((name, "", "degenerate") for name in self.degenerate)
        return out


def vif_table(
    data,
    features: Sequence[str],
    investigate: float = INVESTIGATE,
    severe: float = SEVERE,
) -> VifReport:
    """VIF of each feature from regressing it on the remaining ones.

    ``data`` is a Dataset or a 2-D array whose columns follow ``features``.
    Zero-variance columns are reported as degenerate and left out of the
    regressions.
    """
    features = list(features)
    matrix = data.matrix(features) if hasattr(data, "matrix") else np.asarray(data, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != len(features):
        raise InsufficientData("design does not match feature list")
    if len(features) < 2:
        raise InsufficientData("VIF needs at least two features")
    if matrix.shape[0] < len(features) + 2:
        raise InsufficientData(f"VIF needs at least {len(features) + 2} rows, got {matrix.shape[0]}")
    live = [j for j in range(len(features)) if np.ptp(matrix[:, j]) > 0]
    degenerate = tuple(features[j] for j in range(len(features)) if j not in live)
    vifs: dict[str, float] = {}
    for j in live:
        others = [k for k in live if k != j]
        if not others:
            vifs[features[j]] = 1.0
            continue
        _, r2 = ols_fit(matrix[:, others], matrix[:, j])
        vifs[features[j]] = math.inf if 1.0 - r2 < _PERFECT_FIT else 1.0 / (1.0 - r2)
    flags = {name: vif_flag(v, investigate, severe) for name, v in vifs.items()}
    return VifReport(vifs, flags, degenerate, (investigate, severe))


@dataclass(frozen=True)
class Screening:
    kept: tuple[str, ...]
    excluded: tuple[str, ...]
    project_excluded: bool
    dataset_id: str = ""
    investigate: tuple[str, ...] = field(default=())


def screen_features(report: VifReport, dataset_id: str = "") -> Screening:
    """Decide which features enter importance analysis for one project.

    RFC and WMC never do. The whole project is dropped when any remaining
    feature reaches the severe threshold.
    """
    present = set(report.features)
    kept = tuple(f for f in IMPORTANCE_CANDIDATES if f in present)
    excluded = tuple(f for f in report.features if f not in kept)
    severe = [f for f in kept if report.flags.get(f) == "severe"]
    investigate = tuple(f for f in kept if report.flags.get(f) == "investigate")
    if severe:
        logger.info("%s: excluded from importance analysis, severe VIF on %s", dataset_id, ", ".join(severe))
    return Screening(kept, excluded, bool(severe), dataset_id, investigate)


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ties sharing the mean of the positions they occupy."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    significant: bool
    degenerate: bool = False
    small_sample: bool = False

    __test__ = False


def mann_whitney(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> TestResult:
    """Two-sided Mann-Whitney U test; ``statistic`` is U for sample ``a``.

    p uses the normal approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise InsufficientData("both samples need at least one value")
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    u = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    n = n1 + n2
    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(pooled) / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0.0:
        logger.debug("mann_whitney: all pooled values identical")
        return TestResult(u, 1.0, False, degenerate=True)
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, 2.0 * normal_sf(z))
    return TestResult(u, p, bool(p < alpha))


def kruskal_wallis(groups: Sequence[Sequence[float]], alpha: float = 0.05) -> TestResult:
    """Kruskal-Wallis H test with tie correction; p from chi-square, k-1 df."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2 or any(len(g) == 0 for g in arrays):
        raise InsufficientData("need at least two non-empty groups")
    pooled = np.concatenate(arrays)
    n = len(pooled)
    ranks = average_ranks(pooled)
    h = 0.0
    start = 0
    for g in arrays:
        r = ranks[start : start + len(g)].sum()
        h += r * r / len(g)
        start += len(g)
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    correction = 1.0 - _tie_term(pooled) / (n**3 - n)
    small = n < 5
    if correction <= 0.0:
        return TestResult(0.0, 1.0, False, degenerate=True, small_sample=small)
    h /= correction
    h = max(h, 0.0)
    p = float(chdtrc(len(arrays) - 1, h))
    return TestResult(float(h), p, bool(p < alpha), small_sample=small)
