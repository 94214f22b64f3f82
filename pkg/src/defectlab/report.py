"""Run artifacts: score/importance tables, significance tests and SVG boxplots."""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .errors import MalformedCsv
from .learn import ImportanceRanking, RankSummary, ScoreReport, five_numbers
from .stats import kruskal_wallis, mann_whitney

SCORE_HEADER = ("project", "suite", "model", "fold", "precision", "recall", "f_minority", "auc_weighted")
IMPORTANCE_HEADER = ("project", "metric", "importance", "rank")
VIF_HEADER = ("feature", "vif", "flag")
SCORING_METRICS = ("f_minority", "auc_weighted")


@dataclass(frozen=True)
class ScoreRow:
    project: str
    suite: str
    model: str
    fold: int
    precision: float
    recall: float
    f_minority: float
    auc_weighted: float

    def value(self, metric: str) -> float:
        return getattr(self, metric)


def table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def num(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def score_rows(project: str, suite: str, model: str, reports: Sequence[ScoreReport]) -> list[ScoreRow]:
    return [
        ScoreRow(project, suite, model, i, r.precision_minority, r.recall_minority, r.f_minority, r.auc_weighted)
        for i, r in enumerate(reports)
    ]


def format_scores(rows: Iterable[ScoreRow]) -> str:
    return table(
        SCORE_HEADER,
        ((r.project, r.suite, r.model, r.fold, num(r.precision), num(r.recall), num(r.f_minority), num(r.auc_weighted)) for r in rows),
    )


def read_scores(path: str | Path) -> list[ScoreRow]:
    path = str(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != SCORE_HEADER:
            raise MalformedCsv(path, 1, "scores header mismatch")
        out = []
        for lineno, rec in enumerate(reader, start=2):
            try:
                out.append(ScoreRow(rec[0], rec[1], rec[2], int(rec[3]), *(float(x) for x in rec[4:8])))
            except (ValueError, IndexError, TypeError) as exc:
                raise MalformedCsv(path, lineno, f"bad score row: {exc}") from None
    return out


def format_importance(project: str, ranking: ImportanceRanking | None) -> str:
    rows = [] if ranking is None else [
        (project, f, num(v), num(r)) for f, v, r in zip(ranking.features, ranking.importance, ranking.ranks)
    ]
    return table(IMPORTANCE_HEADER, rows)


def read_importance(path: str | Path) -> dict[str, ImportanceRanking]:
    """Rankings per project found in one importance file."""
    path = str(path)
    grouped: dict[str, list[tuple[str, float, float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != IMPORTANCE_HEADER:
            raise MalformedCsv(path, 1, "importance header mismatch")
        for lineno, rec in enumerate(reader, start=2):
            try:
                grouped.setdefault(rec[0], []).append((rec[1], float(rec[2]), float(rec[3])))
            except (ValueError, IndexError) as exc:
                raise MalformedCsv(path, lineno, f"bad importance row: {exc}") from None
    return {
        p: ImportanceRanking(tuple(f for f, _, _ in rows), tuple(v for _, v, _ in rows), tuple(r for _, _, r in rows))
        for p, rows in grouped.items()
    }


def format_vif(report) -> str:
    return table(VIF_HEADER, report.rows())


# -- summaries and tests -------------------------------------------------------


def _ordered(values: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(values))


def score_summary(rows: Sequence[ScoreRow]) -> list[tuple]:
    """Five-number summary of fold scores per (suite, scoring metric, model)."""
    out = []
    for suite in _ordered(r.suite for r in rows):
        for metric in SCORING_METRICS:
            for model in _ordered(r.model for r in rows if r.suite == suite):
                values = [r.value(metric) for r in rows if r.suite == suite and r.model == model]
                s = five_numbers(values)
                out.append((suite, metric, model, s.n, *s.as_tuple()))
    return out


def significance_table(rows: Sequence[ScoreRow], alpha: float = 0.05) -> list[tuple]:
    """Mann-Whitney for every model pair and Kruskal-Wallis over all models,
    per suite and scoring metric, on pooled fold scores."""
    out = []
    for suite in _ordered(r.suite for r in rows):
        models = _ordered(r.model for r in rows if r.suite == suite)
        for metric in SCORING_METRICS:
            samples = {m: [r.value(metric) for r in rows if r.suite == suite and r.model == m] for m in models}
            for a, b in itertools.combinations(models, 2):
                t = mann_whitney(samples[a], samples[b], alpha)
                out.append((suite, metric, "mann-whitney", f"{a} vs {b}", num(t.statistic), num(t.p_value), int(t.significant)))
            if len(models) >= 2:
                t = kruskal_wallis([samples[m] for m in models], alpha)
                out.append((suite, metric, "kruskal-wallis", " vs ".join(models), num(t.statistic), num(t.p_value), int(t.significant)))
    return out


SUMMARY_HEADER = ("suite", "metric", "model", "n", "min", "q1", "median", "q3", "max")
SIGNIFICANCE_HEADER = ("suite", "metric", "test", "groups", "statistic", "p_value", "significant")
RANK_HEADER = ("metric", "projects", "min", "q1", "median", "q3", "max")


# -- figures -------------------------------------------------------------------

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def boxplot_svg(
    title: str,
    groups: Sequence[tuple[str, Sequence[tuple[str, RankSummary]]]],
    y_range: tuple[float, float],
    y_label: str = "",
) -> str:
    """Grouped boxplots drawn from five-number summaries.

    ``groups`` is a list of ``(group label, [(series label, summary), ...])``;
    series labels share a colour across groups.
    """
    series = _ordered(name for _, boxes in groups for name, _ in boxes)
    colour = {name: _PALETTE[i % len(_PALETTE)] for i, name in enumerate(series)}
    box_w, gap, left, top, height = 18, 26, 60, 40, 260
    widths = [len(boxes) * box_w + (len(boxes) - 1) * 4 for _, boxes in groups]
    width = left + sum(widths) + gap * (len(groups) + 1) + 120
    total_h = top + height + 60
    lo, hi = y_range
    span = hi - lo if hi > lo else 1.0

    def y(v: float) -> float:
        return top + height - (v - lo) / span * height

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" viewBox="0 0 {width} {total_h}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + height}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + height}" x2="{width - 120}" y2="{top + height}" stroke="black"/>',
    ]
    for i in range(6):
        v = lo + span * i / 5
        parts.append(f'<line x1="{left - 4}" y1="{y(v):.1f}" x2="{left}" y2="{y(v):.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{y(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{top + height / 2:.1f}" transform="rotate(-90 14 {top + height / 2:.1f})" text-anchor="middle">{escape(y_label)}</text>')
    x = left + gap
    for (label, boxes), w in zip(groups, widths):
        for j, (name, s) in enumerate(boxes):
            bx = x + j * (box_w + 4)
            mid = bx + box_w / 2
            c = colour[name]
            parts.append(f'<line x1="{mid:.1f}" y1="{y(s.maximum):.1f}" x2="{mid:.1f}" y2="{y(s.q3):.1f}" stroke="{c}"/>')
            parts.append(f'<line x1="{mid:.1f}" y1="{y(s.q1):.1f}" x2="{mid:.1f}" y2="{y(s.minimum):.1f}" stroke="{c}"/>')
            for v in (s.minimum, s.maximum):
                parts.append(f'<line x1="{bx + 4}" y1="{y(v):.1f}" x2="{bx + box_w - 4}" y2="{y(v):.1f}" stroke="{c}"/>')
            parts.append(
                f'<rect x="{bx}" y="{y(s.q3):.1f}" width="{box_w}" height="{max(y(s.q1) - y(s.q3), 0.5):.1f}" fill="{c}" fill-opacity="0.35" stroke="{c}"/>'
            )
            parts.append(f'<line x1="{bx}" y1="{y(s.median):.1f}" x2="{bx + box_w}" y2="{y(s.median):.1f}" stroke="black" stroke-width="2"/>')
        parts.append(f'<text x="{x + w / 2:.1f}" y="{top + height + 18}" text-anchor="middle">{escape(label)}</text>')
        x += w + gap
    for i, name in enumerate(series):
        ly = top + 14 * i
        parts.append(f'<rect x="{width - 110}" y="{ly}" width="10" height="10" fill="{colour[name]}" fill-opacity="0.6"/>')
        parts.append(f'<text x="{width - 95}" y="{ly + 9}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def score_figure(rows: Sequence[ScoreRow], metric: str) -> str:
    """One figure per scoring metric: models on the axis, one box per suite."""
    groups = []
    for model in _ordered(r.model for r in rows):
        boxes = []
        for suite in _ordered(r.suite for r in rows):
            values = [r.value(metric) for r in rows if r.model == model and r.suite == suite]
            if values:
                boxes.append((suite, five_numbers(values)))
        groups.append((model, boxes))
    return boxplot_svg(metric.replace("_", " "), groups, (0.0, 1.0), metric)


def rank_figure(summary: Mapping[str, RankSummary]) -> str:
    top = max((s.maximum for s in summary.values()), default=1.0)
    groups = [(name, [("rank", s)]) for name, s in sorted(summary.items(), key=lambda kv: (kv[1].median, kv[0]))]
    return boxplot_svg("Metric ranks across projects (lower is better)", groups, (0.0, max(top, 1.0)), "rank")
