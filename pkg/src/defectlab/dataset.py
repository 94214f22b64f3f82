"""Learning-ready datasets: metric vectors joined with defect labels."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ArityMismatch, Diagnostic, MalformedCsv
from .metrics import METRIC_NAMES, MetricVector

logger = logging.getLogger(__name__)

FEATURES = METRIC_NAMES
SUITES: dict[str, tuple[str, ...]] = {
    "LOC": ("LOC",),
    "CK": ("WMC", "DIT", "NOC", "RFC", "LCOM5", "CBO"),
    "OTHER": ("NPA", "NPM", "NLE", "CBOI", "CD"),
}
SUITES["CK+OTHER"] = SUITES["CK"] + SUITES["OTHER"]


def suite_features(name: str) -> tuple[str, ...]:
    try:
        return SUITES[name]
    except KeyError:
        raise KeyError(f"unknown metric suite {name!r}; choose from {', '.join(SUITES)}") from None


@dataclass(frozen=True)
class DatasetRow:
    project: str
    release: int
    fqn: str
    features: tuple[float, ...]
    label: bool

    def key(self) -> tuple[tuple[float, ...], bool]:
        return self.features, self.label


@dataclass(frozen=True)
class Dataset:
    rows: tuple[DatasetRow, ...] = ()
    feature_names: tuple[str, ...] = FEATURES
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("duplicate feature names")
        arity = len(self.feature_names)
        for row in self.rows:
            if len(row.features) != arity:
                raise ArityMismatch(f"{row.fqn}: {len(row.features)} features, expected {arity}")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.rows], dtype=bool)

    def matrix(self, features: Sequence[str] | None = None) -> np.ndarray:
        """Feature matrix for ``features`` (all by default), rows in dataset order."""
        full = np.array([r.features for r in self.rows], dtype=float).reshape(len(self.rows), len(self.feature_names))
        if features is None:
            return full
        idx = [self.feature_names.index(f) for f in features]
        return full[:, idx]

    def select(self, features: Sequence[str]) -> Dataset:
        idx = [self.feature_names.index(f) for f in features]
        rows = tuple(replace(r, features=tuple(r.features[i] for i in idx)) for r in self.rows)
        return Dataset(rows, tuple(features), self.diagnostics)

    @property
    def projects(self) -> list[str]:
        return sorted({r.project for r in self.rows})


def assemble(
    vectors: Iterable[MetricVector],
    labels: Mapping[str, bool],
    project: str,
    release: int,
) -> Dataset:
    """One row per measured class; classes without a label entry are clean."""
    vectors = list(vectors)
    measured = {v.fqn for v in vectors}
    diagnostics = [
        Diagnostic("unmeasured-label", f"label for {fqn} has no metric vector, dropped")
        for fqn in sorted(set(labels) - measured)
    ]
    rows = []
    for v in vectors:
        values = v.values()
        if len(values) != len(FEATURES):
            raise ArityMismatch(f"{v.fqn}: {len(values)} metric values")
        rows.append(DatasetRow(project, release, v.fqn, tuple(float(x) for x in values), bool(labels.get(v.fqn, False))))
    for d in diagnostics:
        logger.warning("%s release %s: %s", project, release, d.message)
    return Dataset(tuple(rows), FEATURES, tuple(diagnostics))


def concat(datasets: Iterable[Dataset]) -> Dataset:
    datasets = list(datasets)
    if not datasets:
        return Dataset()
    names = datasets[0].feature_names
    if any(d.feature_names != names for d in datasets):
        raise ArityMismatch("datasets disagree on feature names")
    return Dataset(
        tuple(r for d in datasets for r in d.rows),
        names,
        tuple(x for d in datasets for x in d.diagnostics),
    )


def deduplicate(data: Dataset) -> Dataset:
    """Keep the first row of every (features, label) combination."""
    seen = set()
    rows = []
    for row in data.rows:
        k = row.key()
        if k not in seen:
            seen.add(k)
            rows.append(row)
    return Dataset(tuple(rows), data.feature_names, data.diagnostics)


def undersample(data: Dataset, seed: int) -> Dataset:
    """Randomly drop majority-class rows down to the minority count (off by default)."""
    labels = data.labels
    pos, neg = np.flatnonzero(labels), np.flatnonzero(~labels)
    major, minor = (neg, pos) if len(neg) >= len(pos) else (pos, neg)
    rng = np.random.default_rng(seed)
    keep = set(minor.tolist()) | set(rng.choice(major, size=len(minor), replace=False).tolist())
    return Dataset(tuple(r for i, r in enumerate(data.rows) if i in keep), data.feature_names, data.diagnostics)


def _format_value(name: str, value: float) -> str:
    if name == "CD":
        return f"{value:.6f}"
    if not math.isfinite(value):
        raise ValueError(f"non-finite {name}")
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def format_csv(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("project", "release", "fqn") + tuple(data.feature_names) + ("defective",))
    for r in data.rows:
        writer.writerow(
            [r.project, r.release, r.fqn]
            + [_format_value(n, v) for n, v in zip(data.feature_names, r.features)]
            + [int(r.label)]
        )
    return buf.getvalue()


def write_csv(data: Dataset, path: str | Path) -> None:
    Path(path).write_text(format_csv(data), encoding="utf-8", newline="")


def read_csv(path: str | Path) -> Dataset:
    """Read a dataset file; the header must carry the canonical 12 metrics."""
    path = str(path)
    expected = ["project", "release", "fqn", *FEATURES, "defective"]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise MalformedCsv(path, 1, f"header mismatch: expected {','.join(expected)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(expected):
                raise MalformedCsv(path, lineno, f"{len(rec)} fields, expected {len(expected)}")
            try:
                values = tuple(float(x) for x in rec[3:-1])
                release = int(rec[1])
                label = {"0": False, "1": True}[rec[-1]]
            except (ValueError, KeyError) as exc:
                raise MalformedCsv(path, lineno, f"bad value: {exc}") from None
            if any(not math.isfinite(v) or v < 0 for v in values):
                raise MalformedCsv(path, lineno, "feature values must be finite and non-negative")
            rows.append(DatasetRow(rec[0], release, rec[2], values, label))
    return Dataset(tuple(rows), FEATURES)
