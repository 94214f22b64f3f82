"""The twelve class-level metrics, computed over a resolved ProjectModel."""

from __future__ import annotations

import csv
import io
from collections import Counter
from collections.abc import Iterable
from dataclasses import astuple, dataclass, fields
from pathlib import Path

from tree_sitter import Node

from .javamodel import ClassEntity, MethodRef, ProjectModel, TYPE_DECLARATIONS

METRIC_NAMES = ("LOC", "WMC", "DIT", "NOC", "CBO", "RFC", "LCOM5", "NPA", "NPM", "NLE", "CBOI", "CD")

# decision points added to the base complexity of 1
_BRANCH_NODES = {
    "if_statement",
    "for_statement",
    "enhanced_for_statement",
    "while_statement",
    "do_statement",
    "catch_clause",
    "ternary_expression",
}
_NESTING_NODES = {
    "if_statement",
    "switch_expression",
    "switch_statement",
    "for_statement",
    "enhanced_for_statement",
    "while_statement",
    "do_statement",
    "try_statement",
    "try_with_resources_statement",
}
_OPAQUE = set(TYPE_DECLARATIONS) | {"class_body", "local_class_declaration"}


@dataclass(frozen=True)
class MetricVector:
    fqn: str
    LOC: int
    WMC: int
    DIT: int
    NOC: int
    CBO: int
    RFC: int
    LCOM5: int
    NPA: int
    NPM: int
    NLE: int
    CBOI: int
    CD: float

    def values(self) -> tuple[float, ...]:
        return astuple(self)[1:]


def _measured_lines(cls: ClassEntity, model: ProjectModel) -> set[int]:
    lines = set(range(cls.span[0], cls.span[1] + 1))
    for inner in model.descendants(cls.fqn):
        lines.difference_update(range(inner.span[0], inner.span[1] + 1))
    return lines


def size_and_docs(cls: ClassEntity, model: ProjectModel) -> tuple[int, float, int, int]:
    """LOC, CD, NPA and NPM with nested, anonymous and local classes excluded."""
    lines = _measured_lines(cls, model)
    comments = len(cls.comment_line_set & lines)
    logical = len(cls.logical_line_set & lines)
    cd = comments / (comments + logical) if comments + logical else 0.0
    npa = sum(1 for f in cls.fields if f.visibility == "public")
    npm = sum(1 for m in cls.methods if m.visibility == "public")
    return len(lines), cd, npa, npm


def cyclomatic(body: Node | None) -> int:
    """1 + decision points (if, loops, case labels, catch, ?:, && and ||)."""
    count = 1
    if body is None:
        return count
    stack = [body]
    while stack:
        n = stack.pop()
        t = n.type
        if t in _OPAQUE:
            continue
        if t in _BRANCH_NODES:
            count += 1
        elif t == "switch_label":
            if not any(c.type == "default" for c in n.children):
                count += 1
        elif t == "binary_expression":
            op = n.child_by_field_name("operator")
            if op is not None and op.type in ("&&", "||"):
                count += 1
        stack.extend(n.children)
    return count


def nesting_level(node: Node | None, depth: int = 0) -> int:
    """Maximum control-structure nesting; an else-if stays at its parent's depth."""
    if node is None:
        return depth
    best = depth
    for child in node.children:
        t = child.type
        if t in _OPAQUE:
            continue
        if t == "if_statement":
            best = max(best, _if_depth(child, depth))
        elif t in _NESTING_NODES:
            best = max(best, nesting_level(child, depth + 1))
        else:
            best = max(best, nesting_level(child, depth))
    return best


def _if_depth(node: Node, depth: int) -> int:
    best = depth + 1
    alternative = node.child_by_field_name("alternative")
    for child in node.children:
        if alternative is not None and child.id == alternative.id:
            continue
        if child.type in _OPAQUE:
            continue
        if child.type == "if_statement":
            best = max(best, _if_depth(child, depth + 1))
        elif child.type in _NESTING_NODES:
            best = max(best, nesting_level(child, depth + 2))
        else:
            best = max(best, nesting_level(child, depth + 1))
    if alternative is not None:
        if alternative.type == "if_statement":
            best = max(best, _if_depth(alternative, depth))
        elif alternative.type in _NESTING_NODES:
            best = max(best, nesting_level(alternative, depth + 2))
        else:
            best = max(best, nesting_level(alternative, depth + 1))
    return best


def complexity(cls: ClassEntity, model: ProjectModel) -> tuple[int, int]:
    """WMC over local methods and init blocks, and NLE over method bodies."""
    wmc = sum(cyclomatic(m.body) for m in cls.methods) + sum(cyclomatic(b) for b in cls.init_blocks)
    nle = max((nesting_level(m.body) for m in cls.methods), default=0)
    return wmc, nle


def _depths(model: ProjectModel) -> dict[str, int]:
    parents: dict[str, list[str]] = {}
    for child, parent in model.inherits:
        parents.setdefault(child, []).append(parent)
    memo: dict[str, int] = {}

    def depth(fqn: str) -> int:
        if fqn not in memo:
            memo[fqn] = max((1 + depth(p) for p in parents.get(fqn, ())), default=0)
        return memo[fqn]

    for fqn in model.entities:
        depth(fqn)
    return memo


def inheritance(cls: ClassEntity, model: ProjectModel) -> tuple[int, int]:
    """DIT (longest resolvable ancestor path) and NOC (direct subtypes)."""
    dit = _depths(model)[cls.fqn]
    noc = sum(1 for _, parent in model.inherits if parent == cls.fqn)
    return dit, noc


def coupling(cls: ClassEntity, model: ProjectModel) -> tuple[int, int, int]:
    """CBO, CBOI and RFC."""
    cbo = sum(1 for src, _ in model.uses if src == cls.fqn)
    cboi = sum(1 for _, dst in model.uses if dst == cls.fqn)
    response = {MethodRef(cls.fqn, m.name, m.signature) for m in cls.methods}
    response.update(callee for (caller, _), callee in model.invokes if caller == cls.fqn)
    return cbo, cboi, len(response)


def cohesion(cls: ClassEntity, model: ProjectModel) -> int:
    """LCOM5: connected components of the method/attribute graph that hold a method."""
    if not cls.methods:
        return 0
    parent: dict[str, str] = {}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    attributes = {f.name for f in cls.fields}
    for name in attributes:
        parent["a:" + name] = "a:" + name
    method_nodes = {}
    for m in cls.methods:
        node = "m:" + m.key
        method_nodes[m.key] = node
        parent[node] = node
    for m in cls.methods:
        node = method_nodes[m.key]
        shadowed = {name for name, _ in m.facts.locals}
        touched = ((m.facts.names - shadowed) | m.facts.this_fields) & attributes
        for name in touched:
            union(node, "a:" + name)
    for (caller, origin), callee in model.invokes:
        if caller == cls.fqn and callee.owner == cls.fqn and origin in method_nodes:
            target = method_nodes.get(f"{callee.name}({callee.signature})")
            if target is not None:
                union(method_nodes[origin], target)
    return len({find(node) for node in method_nodes.values()})


def metric_vector(cls: ClassEntity, model: ProjectModel) -> MetricVector:
    loc, cd, npa, npm = size_and_docs(cls, model)
    wmc, nle = complexity(cls, model)
    dit, noc = inheritance(cls, model)
    cbo, cboi, rfc = coupling(cls, model)
    lcom5 = cohesion(cls, model)
    return MetricVector(cls.fqn, loc, wmc, dit, noc, cbo, rfc, lcom5, npa, npm, nle, cboi, cd)


def compute_all(model: ProjectModel) -> list[MetricVector]:
    """Metric vectors for every named class, sorted by fqn.

    Degree counts and depths are computed once here rather than per class.
    """
    depths = _depths(model)
    noc = Counter(parent for _, parent in model.inherits)
    cbo = Counter(src for src, _ in model.uses)
    cboi = Counter(dst for _, dst in model.uses)
    callees: dict[str, set[MethodRef]] = {}
    for (caller, _), callee in model.invokes:
        callees.setdefault(caller, set()).add(callee)
    out = []
    for cls in sorted(model.named(), key=lambda e: e.fqn):
        loc, cd, npa, npm = size_and_docs(cls, model)
        wmc, nle = complexity(cls, model)
        response = {MethodRef(cls.fqn, m.name, m.signature) for m in cls.methods} | callees.get(cls.fqn, set())
        out.append(
            MetricVector(
                cls.fqn,
                loc,
                wmc,
                depths[cls.fqn],
                noc[cls.fqn],
                cbo[cls.fqn],
                len(response),
                cohesion(cls, model),
                npa,
                npm,
                nle,
                cboi[cls.fqn],
                cd,
            )
        )
    return out


def format_metrics_csv(vectors: Iterable[MetricVector]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("fqn",) + METRIC_NAMES)
    for v in vectors:
        writer.writerow([v.fqn] + [str(x) for x in astuple(v)[1:-1]] + [f"{v.CD:.6f}"])
    return buf.getvalue()


def write_metrics_csv(vectors: Iterable[MetricVector], path: str | Path) -> None:
    Path(path).write_text(format_metrics_csv(vectors), encoding="utf-8", newline="")


def read_metrics_csv(path: str | Path) -> list[MetricVector]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("fqn",) + METRIC_NAMES:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        out = []
        for row in reader:
            ints = [int(x) for x in row[1:-1]]
            out.append(MetricVector(row[0], *ints, float(row[-1])))
    return out


assert tuple(f.name for f in fields(MetricVector))[1:] == METRIC_NAMES
