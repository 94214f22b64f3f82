"""Pipeline stages. Each reads the files of the stage before it and writes
its own under ``<out>/<project>/<stage>/``; files never change in place."""

from __future__ import annotations

import csv
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import report as rpt
from .config import RunConfig
from .dataset import Dataset, assemble, concat, deduplicate, format_csv, read_csv, suite_features, undersample
from .errors import ConfigError, DefectLabError, InsufficientData
from .javamodel import build_project_model, load_snapshot
from .learn import aggregate_rankings, cross_validate, permutation_importance
from .metrics import compute_all, format_metrics_csv, read_metrics_csv
from .miner import (
    GitRepository,
    fix_pattern,
    format_fix_commits,
    format_labels,
    format_provenance,
    format_windows,
    load_issues,
    mine_repository,
    read_labels,
)
from .stats import IMPORTANCE_CANDIDATES, Screening, screen_features, vif_table

logger = logging.getLogger(__name__)

REPORT_DIR = "report"


class MissingInput(DefectLabError):
    """A stage input file or directory does not exist."""


def write_atomic(path: str | Path, text: str) -> None:
    """Write through a temporary sibling, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _replace_dir(staging: Path, target: Path) -> None:
    if target.exists():
        shutil.rmtree(target)
    os.replace(staging, target)


def stage_dir(out: Path, project: str, stage: str) -> Path:
    return Path(out) / project / stage


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingInput(f"{what} not found: {path}")
    return path


def _releases(directory: Path) -> list[tuple[int, Path]]:
    found = []
    for child in directory.glob("release-*"):
        suffix = child.name.removeprefix("release-")
        if child.is_dir() and suffix.isdigit():
            found.append((int(suffix), child))
    return sorted(found)


def _diagnostics_text(diagnostics) -> str:
    return "".join(f"{d}\n" for d in diagnostics)


# -- mine ------------------------------------------------------------------------


def run_mine(repo: str | Path, project: str, out: Path, config: RunConfig, issues: str | Path | None = None) -> Path:
    """Windows, fix commits, labels, provenance and snapshot trees of one repository."""
    target = stage_dir(out, project, "mine")
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=".mine-"))
    try:
        pattern = fix_pattern(config.fix_words, config.issue_pattern)
        scratch = staging / ".snapshots"
        result = mine_repository(
            GitRepository(_require(Path(repo), "repository")), scratch, config.interval_months,
            load_issues(issues), pattern,
        )
        write_atomic(staging / "windows.csv", format_windows(result.windows))
        write_atomic(staging / "fix_commits.csv", format_fix_commits(result.fix_commits, result.assignment))
        write_atomic(staging / "diagnostics.txt", _diagnostics_text(result.diagnostics))
        for w in result.windows:
            release = staging / f"release-{w.index}"
            write_atomic(release / "labels.csv", format_labels(result.labels[w.index]))
            write_atomic(release / "provenance.csv", format_provenance(result.labels[w.index]))
            os.replace(scratch / f"release-{w.index}", release / "snapshot")
        shutil.rmtree(scratch, ignore_errors=True)
        _replace_dir(staging, target)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("%s: %d windows, %d fix commits", project, len(result.windows), len(result.fix_commits))
    return target


# -- metrics ---------------------------------------------------------------------


def snapshot_metrics(snapshot: str | Path) -> tuple[str, str]:
    """Metrics CSV text and diagnostics text for one source tree."""
    entities, diagnostics = load_snapshot(_require(Path(snapshot), "snapshot"))
    model = build_project_model(entities)
    return format_metrics_csv(compute_all(model)), _diagnostics_text(list(diagnostics) + list(model.diagnostics))


def run_metrics(out: Path, project: str) -> Path:
    """Metrics for every mined release of ``project``."""
    mined = _require(stage_dir(out, project, "mine"), "mine stage output")
    target = stage_dir(out, project, "metrics")
    releases = _releases(mined)
    if not releases:
        raise MissingInput(f"no releases under {mined}")
    for index, release in releases:
        table, diags = snapshot_metrics(release / "snapshot")
        write_atomic(target / f"release-{index}" / "metrics.csv", table)
        write_atomic(target / f"release-{index}" / "diagnostics.txt", diags)
    return target


# -- dataset ---------------------------------------------------------------------


def run_dataset(out: Path, project: str, config: RunConfig) -> Path:
    """Join metrics with labels; ``dataset_raw.csv`` before and ``dataset.csv`` after dedup."""
    metrics_dir = _require(stage_dir(out, project, "metrics"), "metrics stage output")
    mined = _require(stage_dir(out, project, "mine"), "mine stage output")
    parts = []
    for index, release in _releases(metrics_dir):
        vectors = read_metrics_csv(release / "metrics.csv")
        labels = read_labels(_require(mined / f"release-{index}" / "labels.csv", "labels"))
        parts.append(assemble(vectors, labels, project, index))
    raw = concat(parts)
    data = deduplicate(raw)
    if config.undersample:
        data = undersample(data, config.seed)
    target = stage_dir(out, project, "dataset")
    write_atomic(target / "dataset_raw.csv", format_csv(raw))
    write_atomic(target / "dataset.csv", format_csv(data))
    write_atomic(target / "diagnostics.txt", _diagnostics_text(raw.diagnostics))
    return target / "dataset.csv"


# -- evaluate / importance ---------------------------------------------------------


def _project_of(data: Dataset, override: str | None) -> str:
    if override:
        return override
    projects = data.projects
    if len(projects) != 1:
        raise ConfigError(f"dataset holds {len(projects)} projects; pass --project")
    return projects[0]


def _suite(name: str) -> tuple[str, ...]:
    try:
        return suite_features(name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


def run_evaluate(dataset_path: str | Path, suite: str, out: Path, config: RunConfig, project: str | None = None) -> Path:
    features = _suite(suite)
    data = read_csv(_require(Path(dataset_path), "dataset"))
    project = _project_of(data, project)
    rows = []
    for named in config.models:
        reports = cross_validate(data, named.spec, config.k, config.seed, features)
        rows.extend(rpt.score_rows(project, suite, named.name, reports))
    target = stage_dir(out, project, "evaluate") / suite / "scores.csv"
    write_atomic(target, rpt.format_scores(rows))
    return target


@dataclass(frozen=True)
class ImportanceOutcome:
    screening: Screening
    reason: str
    path: Path


def run_importance(dataset_path: str | Path, out: Path, config: RunConfig, project: str | None = None) -> ImportanceOutcome:
    """VIF screening on the nine candidates, then permutation importance for retained projects."""
    data = read_csv(_require(Path(dataset_path), "dataset"))
    project = _project_of(data, project)
    candidates = [f for f in IMPORTANCE_CANDIDATES if f in data.feature_names]
    target = stage_dir(out, project, "importance")
    reason = ""
    try:
        report = vif_table(data, candidates, config.vif_investigate, config.vif_severe)
        screening = screen_features(report, project)
        vif_text = rpt.format_vif(report)
        if screening.project_excluded:
            reason = "severe multicollinearity"
    except InsufficientData as exc:
        screening = Screening(tuple(candidates), (), True, project)
        vif_text = rpt.table(rpt.VIF_HEADER, [])
        reason = f"VIF not computable: {exc}"
    ranking = None
    if not screening.project_excluded:
        ranking = permutation_importance(
            data, config.model(config.importance_model), screening.kept, config.k, config.repeats,
            config.seed, config.importance_scoring,
        )
    else:
        logger.warning("%s excluded from importance analysis (%s)", project, reason)
    write_atomic(target / "vif.csv", vif_text)
    write_atomic(target / "importance.csv", rpt.format_importance(project, ranking))
    write_atomic(
        target / "screening.csv",
        rpt.table(
            ("project", "kept", "excluded", "investigate", "project_excluded", "reason"),
            [(project, " ".join(screening.kept), " ".join(screening.excluded), " ".join(screening.investigate),
              int(screening.project_excluded), reason)],
        ),
    )
    return ImportanceOutcome(screening, reason, target)


# -- report ---------------------------------------------------------------------------


def run_report(run_dir: Path, config: RunConfig) -> Path:
    """Summaries, significance tests and figures over every project in ``run_dir``."""
    run_dir = _require(Path(run_dir), "run directory")
    score_files = sorted(p for p in run_dir.glob("*/evaluate/*/scores.csv") if p.parts[-4] != REPORT_DIR)
    if not score_files:
        raise MissingInput(f"no scores.csv under {run_dir}")
    scores = [row for p in score_files for row in rpt.read_scores(p)]
    target = run_dir / REPORT_DIR
    summary = rpt.score_summary(scores)
    write_atomic(target / "score_summary.csv", rpt.table(rpt.SUMMARY_HEADER, [_fmt_row(r) for r in summary]))
    significance = rpt.significance_table(scores, config.alpha)
    write_atomic(target / "significance.csv", rpt.table(rpt.SIGNIFICANCE_HEADER, significance))
    for metric in rpt.SCORING_METRICS:
        write_atomic(target / "figures" / f"scores_{metric}.svg", rpt.score_figure(scores, metric))

    rankings = []
    vif_rows = []
    for path in sorted(run_dir.glob("*/importance/importance.csv")):
        rankings.extend(rpt.read_importance(path).values())
        project = path.parts[-3]
        with open(path.parent / "vif.csv", encoding="utf-8", newline="") as fh:
            vif_rows.extend([project, *rec] for rec in list(csv.reader(fh))[1:])
    write_atomic(target / "vif.csv", rpt.table(("project",) + rpt.VIF_HEADER, vif_rows))
    rank_rows = []
    if rankings:
        ranks = aggregate_rankings(rankings)
        rank_rows = [(m, s.n, *(rpt.num(v) for v in s.as_tuple())) for m, s in sorted(ranks.items())]
        write_atomic(target / "figures" / "metric_ranks.svg", rpt.rank_figure(ranks))
    write_atomic(target / "rank_summary.csv", rpt.table(rpt.RANK_HEADER, rank_rows))
    write_atomic(target / "report.md", _markdown(summary, significance, rank_rows, len(rankings)))
    return target


def _fmt_row(row: tuple) -> tuple:
    return tuple(rpt.num(v) if isinstance(v, float) else v for v in row)


def _markdown(summary, significance, rank_rows, n_ranked: int) -> str:
    lines = ["# Defect prediction run report", "", "## Fold scores (median [q1, q3])", ""]
    lines += ["| suite | metric | model | n | median | q1 | q3 |", "|---|---|---|---|---|---|---|"]
    for suite, metric, model, n, _lo, q1, med, q3, _hi in summary:
        lines.append(f"| {suite} | {metric} | {model} | {n} | {med:.3f} | {q1:.3f} | {q3:.3f} |")
    lines += ["", "## Significance", "", "| suite | metric | test | groups | statistic | p | significant |", "|---|---|---|---|---|---|---|"]
    for suite, metric, test, groups, stat, p, sig in significance:
        lines.append(f"| {suite} | {metric} | {test} | {groups} | {float(stat):.4g} | {float(p):.4g} | {'yes' if sig else 'no'} |")
    lines += ["", f"## Metric ranks over {n_ranked} retained project(s)", ""]
    if rank_rows:
        lines += ["| metric | median | q1 | q3 |", "|---|---|---|---|"]
        for metric, _n, _lo, q1, med, q3, _hi in sorted(rank_rows, key=lambda r: float(r[4])):
            lines.append(f"| {metric} | {float(med):.2f} | {float(q1):.2f} | {float(q3):.2f} |")
    else:
        lines.append("No project passed VIF screening.")
    lines += ["", "Figures: `figures/scores_f_minority.svg`, `figures/scores_auc_weighted.svg`"
              + (", `figures/metric_ranks.svg`" if rank_rows else "") + ".", ""]
    return "\n".join(lines)


# -- whole pipeline -------------------------------------------------------------------


def run_project(project, out: Path, config: RunConfig) -> None:
    run_mine(project.path, project.name, out, config, project.issues)
    run_metrics(out, project.name)
    dataset = run_dataset(out, project.name, config)
    for suite in config.suites:
        run_evaluate(dataset, suite, out, config, project.name)
    run_importance(dataset, out, config, project.name)


def run_pipeline(config: RunConfig, out: Path, jobs: int = 1) -> Path:
    if not config.projects:
        raise ConfigError("config lists no projects")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            for fut in [pool.submit(run_project, p, out, config) for p in config.projects]:
                fut.result()
    else:
        for p in config.projects:
            run_project(p, out, config)
    return run_report(out, config)
