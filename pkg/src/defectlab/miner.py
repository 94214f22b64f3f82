"""Repository mining: release windows, defect-fixing commits and per-class
defect labels derived from the lines those commits touched.

Git is driven through its command line; only the commit graph, timestamps,
messages and unified diffs are consumed.
"""

from __future__ import annotations

import calendar
import csv
import io
import json
import logging
import re
import subprocess
import tarfile
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import Diagnostic, DiffUnavailable, EmptyRepository, SnapshotCheckoutFailed
from .javamodel import ClassEntity

logger = logging.getLogger(__name__)

DEFAULT_FIX_WORDS = ("fix", "fixes", "fixed", "bug", "bugs", "defect", "fault", "patch")
ISSUE_PATTERN = r"#\d+"

_HUNK = re.compile(rb"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


@dataclass(frozen=True)
class Commit:
    id: str
    timestamp: datetime
    message: str
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class ReleaseWindow:
    index: int
    snapshot_commit: str
    start: datetime
    end: datetime

    def contains(self, instant: datetime) -> bool:
        return self.start <= instant < self.end


@dataclass(frozen=True)
class DefectFixCommit:
    id: str
    timestamp: datetime
    message: str
    matched_evidence: tuple[str, ...]
    issue_ref: str | None = None
    issue_created: datetime | None = None

    def __post_init__(self):
        if not self.matched_evidence:
            raise ValueError("a fix commit needs matched evidence")

    @property
    def assigned_at(self) -> datetime:
        """Issue creation time when known, else the commit time."""
        return self.issue_created if self.issue_created is not None else self.timestamp


@dataclass(frozen=True)
class DefectLabel:
    release: int
    fqn: str
    defective: bool
    provenance: tuple[tuple[str, str, int], ...] = ()

    def __post_init__(self):
        if self.defective != bool(self.provenance):
            raise ValueError("defective must hold exactly when provenance is non-empty")


def add_months(instant: datetime, months: int) -> datetime:
    """Calendar month arithmetic, clamping the day to the target month's length."""
    total = instant.month - 1 + months
    year, month = instant.year + total // 12, total % 12 + 1
    day = min(instant.day, calendar.monthrange(year, month)[1])
    return instant.replace(year=year, month=month, day=day)


def utc(ts: int | float) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def enumerate_release_windows(
    history: Sequence[Commit],
    interval_months: int = 6,
    fix_instants: Iterable[datetime] = (),
) -> list[ReleaseWindow]:
    """Tile the first-parent history into consecutive windows anchored at the
    first commit. The last window, which history never completes, is kept
    only when at least one fix commit is assigned to it.
    """
    if not history:
        raise EmptyRepository("repository has no commits")
    if interval_months < 1:
        raise ValueError("interval_months must be >= 1")
    t0, last = history[0].timestamp, history[-1].timestamp
    bounds = [t0]
    while True:
        nxt = add_months(t0, interval_months * len(bounds))
        bounds.append(nxt)
        if nxt > last:
            break
    windows = []
    for i in range(len(bounds) - 1):
        start = bounds[i]
        if i == 0:
            snapshot = history[0].id
        else:
            snapshot = [c.id for c in history if c.timestamp < start][-1]
        windows.append(ReleaseWindow(i, snapshot, start, bounds[i + 1]))
    instants = list(fix_instants)
    if len(windows) > 1 and not any(windows[-1].contains(t) for t in instants):
        windows.pop()
    return windows


def fix_pattern(words: Sequence[str] = DEFAULT_FIX_WORDS, issue_pattern: str | None = ISSUE_PATTERN) -> re.Pattern:
    parts = [r"\b(?:" + "|".join(re.escape(w) for w in words) + r")\b"] if words else []
    if issue_pattern:
        parts.append(issue_pattern)
    return re.compile("|".join(parts), re.IGNORECASE)


_DEFAULT_PATTERN = fix_pattern()


def classify_fix_commit(message: str, pattern: re.Pattern | None = None) -> tuple[bool, list[str]]:
    """Keyword/issue-reference heuristic; returns (is_fix, matched substrings)."""
    evidence = [m.group(0) for m in (pattern or _DEFAULT_PATTERN).finditer(message)]
    return bool(evidence), evidence


def parse_unified_diff(diff: bytes | str, suffix: str = ".java") -> dict[str, set[int]]:
    """Pre-image line numbers touched per file in a ``-U0`` unified diff.

    Deleted or changed lines contribute themselves; a pure insertion
    contributes the pre-image line it follows (line 1 for insertions at the
    top). New files have no pre-image and binary files carry no hunks, so
    neither contributes.
    """
    if isinstance(diff, str):
        diff = diff.encode("utf-8")
    out: dict[str, set[int]] = {}
    old_path: str | None = None
    current: set[int] | None = None
    for raw in diff.split(b"\n"):
        if raw.startswith(b"diff --git "):
            old_path, current = None, None
            m = re.match(rb"diff --git a/(.*) b/(.*)$", raw)
            if m:
                old_path = m.group(1).decode("utf-8", errors="replace")
        elif raw.startswith(b"rename from "):
            old_path = raw[len(b"rename from ") :].decode("utf-8", errors="replace")
        elif raw.startswith(b"--- "):
            target = raw[4:].rstrip(b"\t")
            old_path = None if target == b"/dev/null" else target.removeprefix(b"a/").decode("utf-8", errors="replace")
        elif raw.startswith(b"+++ "):
            if old_path is not None and old_path.endswith(suffix):
                current = out.setdefault(old_path, set())
            else:
                current = None
        elif current is not None and raw.startswith(b"@@"):
            m = _HUNK.match(raw)
            if not m:
                continue
            start = int(m.group(1))
            count = 1 if m.group(2) is None else int(m.group(2))
            if count == 0:
                current.add(max(start, 1))
            else:
                current.update(range(start, start + count))
    return {path: lines for path, lines in out.items() if lines}


class GitRepository:
    """Minimal subprocess wrapper over a local clone."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def git(self, *args: str, check: bool = True) -> bytes:
        cmd = ["git", "-C", str(self.path), "-c", "core.quotepath=off", *args]
        proc = subprocess.run(cmd, capture_output=True)
        if check and proc.returncode != 0:
            raise subprocess.CalledProcessError(proc.returncode, cmd, proc.stdout, proc.stderr)
        return proc.stdout

    def first_parent_history(self, ref: str = "HEAD") -> list[Commit]:
        """Commits on the first-parent chain of ``ref``, oldest first."""
        try:
            raw = self.git("log", "--first-parent", "--reverse", "--format=%H%x00%P%x00%ct%x00%B%x1e", ref)
        except subprocess.CalledProcessError as exc:
            raise EmptyRepository(f"{self.path}: {exc.stderr.decode(errors='replace').strip()}") from None
        commits = []
        for record in raw.decode("utf-8", errors="replace").split("\x1e"):
            record = record.lstrip("\n")
            if not record:
                continue
            sha, parents, ts, message = record.split("\x00", 3)
            commits.append(Commit(sha, utc(int(ts)), message.strip(), tuple(parents.split())))
        if not commits:
            raise EmptyRepository(f"{self.path}: no commits")
        return commits

    def changed_lines(self, commit: Commit) -> dict[str, set[int]]:
        if not commit.parents:
            raise DiffUnavailable(commit.id, "root commit")
        try:
            diff = self.git(
                "diff", "--no-color", "--no-ext-diff", "-U0", "-M",
                "--src-prefix=a/", "--dst-prefix=b/", commit.parents[0], commit.id,
            )
        except subprocess.CalledProcessError as exc:
            raise DiffUnavailable(commit.id, exc.stderr.decode(errors="replace").strip()) from None
        return parse_unified_diff(diff)

    def materialize(self, commit: str, dest: str | Path) -> Path:
        """Write the tree of ``commit`` into ``dest`` without touching the worktree."""
        dest = Path(dest)
        try:
            blob = self.git("archive", "--format=tar", commit)
            dest.mkdir(parents=True, exist_ok=True)
            with tarfile.open(fileobj=io.BytesIO(blob)) as tar:
                if hasattr(tarfile, "data_filter"):
                    tar.extractall(dest, filter="data")
                else:
                    tar.extractall(dest)
        except (subprocess.CalledProcessError, tarfile.TarError, OSError) as exc:
            raise SnapshotCheckoutFailed(commit, str(exc)) from None
        return dest


def changed_lines(repo: GitRepository, commit: Commit) -> dict[str, set[int]]:
    """Pre-image lines of ``.java`` files modified by ``commit`` against its first parent."""
    return repo.changed_lines(commit)


def load_issues(path: str | Path | None) -> dict[str, datetime]:
    """Read ``issues.ndjson``: one object per line with ``id`` and ``created``."""
    if path is None:
        return {}
    issues = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            created = datetime.fromisoformat(str(rec["created"]).replace("Z", "+00:00"))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: bad issue record ({exc})") from None
        if created.tzinfo is None:
            created = created.replace(tzinfo=timezone.utc)
        issues[str(rec["id"]).lstrip("#")] = created.astimezone(timezone.utc)
    return issues


def find_fix_commits(
    history: Iterable[Commit],
    issues: Mapping[str, datetime] | None = None,
    pattern: re.Pattern | None = None,
) -> list[DefectFixCommit]:
    issues = issues or {}
    out = []
    for c in history:
        is_fix, evidence = classify_fix_commit(c.message, pattern)
        if not is_fix:
            continue
        ref = next((e.lstrip("#") for e in evidence if e.startswith("#")), None)
        out.append(DefectFixCommit(c.id, c.timestamp, c.message, tuple(evidence), ref, issues.get(ref) if ref else None))
    return out


def assign_fixes(fixes: Iterable[DefectFixCommit], windows: Sequence[ReleaseWindow]) -> dict[int, list[DefectFixCommit]]:
    out: dict[int, list[DefectFixCommit]] = {w.index: [] for w in windows}
    for fix in fixes:
        for w in windows:
            if w.contains(fix.assigned_at):
                out[w.index].append(fix)
                break
    return out


def label_defective_classes(
    window: ReleaseWindow,
    fix_commits: Iterable[DefectFixCommit],
    snapshot_entities: Sequence[ClassEntity],
    changes: Mapping[str, Mapping[str, Iterable[int]]],
) -> tuple[list[DefectLabel], list[Diagnostic]]:
    """Label every named class of the snapshot.

    ``changes`` maps a fix commit id to its changed pre-image lines per file.
    A line counts for the innermost entity containing it, lifted to the
    closest named (non-anonymous, non-local) entity.
    """
    by_file: dict[str, list[ClassEntity]] = defaultdict(list)
    by_fqn = {e.fqn: e for e in snapshot_entities}
    for e in snapshot_entities:
        by_file[e.file_path].append(e)
    provenance: dict[str, list[tuple[str, str, int]]] = defaultdict(list)
    diagnostics: list[Diagnostic] = []
    for fix in fix_commits:
        touched = changes.get(fix.id)
        if touched is None:
            diagnostics.append(Diagnostic("no-diff", f"no diff for fix commit {fix.id}"))
            continue
        for path in sorted(touched):
            entities = by_file.get(path)
            if not entities:
                diagnostics.append(Diagnostic("unmatched-file", f"{fix.id[:12]} touches {path}, absent from snapshot", path))
                continue
            for line in sorted(touched[path]):
                holders = [e for e in entities if e.contains_line(line)]
                if not holders:
                    continue
                owner = min(holders, key=lambda e: e.span[1] - e.span[0])
                while not owner.is_named and owner.enclosing in by_fqn:
                    owner = by_fqn[owner.enclosing]
                if owner.is_named:
                    provenance[owner.fqn].append((fix.id, path, line))
    labels = [
        DefectLabel(window.index, e.fqn, bool(provenance.get(e.fqn)), tuple(provenance.get(e.fqn, ())))
        for e in sorted(snapshot_entities, key=lambda e: e.fqn)
        if e.is_named
    ]
    return labels, diagnostics


@dataclass
class MiningResult:
    history: list[Commit]
    windows: list[ReleaseWindow]
    fix_commits: list[DefectFixCommit]
    assignment: dict[int, list[DefectFixCommit]]
    labels: dict[int, list[DefectLabel]] = field(default_factory=dict)
    snapshots: dict[int, list[ClassEntity]] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)


def mine_repository(
    repo: GitRepository | str | Path,
    workdir: str | Path,
    interval_months: int = 6,
    issues: Mapping[str, datetime] | None = None,
    pattern: re.Pattern | None = None,
) -> MiningResult:
    """Run windowing, fix detection and labeling over a local clone.

    Snapshots are extracted under ``workdir/release-<i>``.
    """
    from .javamodel import load_snapshot

    repo = repo if isinstance(repo, GitRepository) else GitRepository(repo)
    history = repo.first_parent_history()
    fixes = find_fix_commits(history, issues, pattern)
    windows = enumerate_release_windows(history, interval_months, (f.assigned_at for f in fixes))
    assignment = assign_fixes(fixes, windows)
    result = MiningResult(history, windows, fixes, assignment)
    assigned = {f.id for group in assignment.values() for f in group}
    for f in fixes:
        if f.id not in assigned:
            result.diagnostics.append(Diagnostic("unassigned-fix", f"{f.id[:12]} assigned at {f.assigned_at.isoformat()} falls in no window"))
    by_id = {c.id: c for c in history}
    diffs: dict[str, dict[str, set[int]]] = {}
    for f in fixes:
        if f.id not in assigned:
            continue
        try:
            diffs[f.id] = repo.changed_lines(by_id[f.id])
        except DiffUnavailable as exc:
            result.diagnostics.append(Diagnostic("diff-unavailable", str(exc)))
    for w in windows:
        tree = repo.materialize(w.snapshot_commit, Path(workdir) / f"release-{w.index}")
        entities, diags = load_snapshot(tree)
        result.diagnostics.extend(diags)
        labels, diags = label_defective_classes(w, assignment[w.index], entities, diffs)
        result.diagnostics.extend(diags)
        result.labels[w.index] = labels
        result.snapshots[w.index] = entities
    return result


def _csv(rows: Iterable[Sequence[object]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def format_labels(labels: Iterable[DefectLabel]) -> str:
    return _csv(((lab.fqn, int(lab.defective)) for lab in labels), ("fqn", "defective"))


def format_provenance(labels: Iterable[DefectLabel]) -> str:
    rows = [(lab.fqn, c, f, line) for lab in labels for c, f, line in lab.provenance]
    return _csv(rows, ("fqn", "commit", "file", "line"))


def format_windows(windows: Iterable[ReleaseWindow]) -> str:
    return _csv(
        ((w.index, w.snapshot_commit, w.start.isoformat(), w.end.isoformat()) for w in windows),
        ("release", "snapshot_commit", "start", "end"),
    )


def format_fix_commits(fixes: Iterable[DefectFixCommit], assignment: Mapping[int, list[DefectFixCommit]]) -> str:
    window_of = {f.id: idx for idx, group in assignment.items() for f in group}
    return _csv(
        (
            (f.id, f.timestamp.isoformat(), f.issue_ref or "", f.assigned_at.isoformat(), window_of.get(f.id, ""), "|".join(f.matched_evidence))
            for f in fixes
        ),
        ("commit", "timestamp", "issue", "assigned_at", "release", "evidence"),
    )


def read_labels(path: str | Path) -> dict[str, bool]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["fqn"]: row["defective"] == "1" for row in csv.DictReader(fh)}
