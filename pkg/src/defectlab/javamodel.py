"""Java source model: class entities with line spans, member inventories and
the per-snapshot reference graph (inheritance, usage, invocation).

Parsing is done with tree-sitter. Name resolution is syntactic and limited to
the entities of one snapshot; anything else is recorded as unresolved.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType

import tree_sitter_java
from tree_sitter import Language, Node, Parser

from .errors import Diagnostic, ModelCycle, ParseError

logger = logging.getLogger(__name__)

JAVA = Language(tree_sitter_java.language())

TYPE_DECLARATIONS = {
    "class_declaration": "class",
    "record_declaration": "class",
    "interface_declaration": "interface",
    "enum_declaration": "enum",
    "annotation_type_declaration": "annotation",
}
CLASS_BODIES = {"class_body", "interface_body", "enum_body", "annotation_type_body", "enum_body_declarations"}
PRIMITIVES = {"integral_type", "floating_point_type", "boolean_type", "void_type"}

TOP_LEVEL = "top-level"
NESTED = "nested"
ANONYMOUS = "anonymous"
LOCAL = "local"

INITIALIZER = "<initializer>"


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type_name: str
    visibility: str
    has_initializer: bool
    line: int
    initializer: Node | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CallSite:
    """One method invocation. ``receiver`` is (kind, text) where kind is one of
    implicit, this, super, name, new, this_field, scoped or other."""

    receiver: tuple[str, str]
    name: str
    arg_count: int
    line: int


@dataclass(frozen=True)
class BodyFacts:
    """Syntactic facts gathered from one executable body (method, initializer
    block or field initializer). Nested class bodies are never entered."""

    origin: str
    locals: tuple[tuple[str, str], ...] = ()
    names: frozenset[str] = frozenset()
    this_fields: frozenset[str] = frozenset()
    calls: tuple[CallSite, ...] = ()
    type_refs: tuple[str, ...] = ()


@dataclass(frozen=True)
class MethodDecl:
    name: str
    signature: str
    visibility: str
    params: tuple[tuple[str, str], ...]
    is_constructor: bool
    line: int
    facts: BodyFacts
    body: Node | None = field(default=None, compare=False, repr=False)

    @property
    def key(self) -> str:
        return f"{self.name}({self.signature})"


@dataclass(frozen=True)
class ClassEntity:
    fqn: str
    kind: str
    file_path: str
    span: tuple[int, int]
    nesting: str
    supertype_names: tuple[str, ...]
    fields: tuple[FieldDecl, ...]
    methods: tuple[MethodDecl, ...]
    init_blocks: tuple[Node, ...] = field(compare=False, repr=False)
    comment_lines: int
    logical_lines: int
    package: str = ""
    enclosing: str | None = None
    simple_name: str = ""
    imports: tuple[str, ...] = ()
    type_parameters: tuple[str, ...] = ()
    type_refs: tuple[str, ...] = ()
    bodies: tuple[BodyFacts, ...] = ()
    comment_line_set: frozenset[int] = field(default=frozenset(), repr=False)
    logical_line_set: frozenset[int] = field(default=frozenset(), repr=False)

    @property
    def is_named(self) -> bool:
        return self.nesting in (TOP_LEVEL, NESTED)

    def contains_line(self, line: int) -> bool:
        return self.span[0] <= line <= self.span[1]


def _text(node: Node | None) -> str:
    if node is None:
        return ""
    return node.text.decode("utf-8", errors="replace")


def strip_type(name: str) -> str:
    """Drop generic arguments, array brackets and whitespace from a written type."""
    depth = 0
    out = []
    for ch in name:
        if ch == "<":
            depth += 1
        elif ch == ">":
            depth -= 1
        elif depth == 0 and not ch.isspace():
            out.append(ch)
    base = "".join(out)
    while base.endswith("[]"):
        base = base[:-2]
    return base.removesuffix("...")


def type_names(node: Node | None) -> list[str]:
    """All reference type names mentioned by a type node, generics flattened.

    ``Map<String, List<Foo>>[]`` yields ``["Map", "String", "List", "Foo"]``.
    """
    if node is None or node.type in PRIMITIVES:
        return []
    t = node.type
    if t == "type_identifier":
        name = _text(node)
        return [] if name == "var" else [name]
    if t == "scoped_type_identifier":
        return [strip_type(_text(node))] + [
            n for c in node.named_children if c.type == "type_arguments" for n in type_names(c)
        ]
    if t == "generic_type":
        out: list[str] = []
        for c in node.named_children:
            out.extend(type_names(c))
        return out
    out = []
    for c in node.named_children:
        if c.type not in ("annotation", "marker_annotation", "dimensions"):
            out.extend(type_names(c))
    return out


def base_type(node: Node | None) -> str:
    """The declared type of a variable without generic arguments or array dims."""
    if node is None or node.type in PRIMITIVES:
        return ""
    return strip_type(_text(node))


def _visibility(decl: Node, implicit_public: bool) -> str:
    for c in decl.children:
        if c.type == "modifiers":
            words = set(_text(c).split())
            for vis in ("public", "protected", "private"):
                if vis in words:
                    return vis
    return "public" if implicit_public else "package"


def _has_modifier(decl: Node, word: str) -> bool:
    return any(c.type == "modifiers" and word in _text(c).split() for c in decl.children)


def _line_span(node: Node) -> tuple[int, int]:
    start = node.start_point[0] + 1
    end_row, end_col = node.end_point
    end = end_row + 1 if end_col > 0 or end_row == node.start_point[0] else end_row
    return start, max(start, end)


class _BodyScanner:
    """Collects BodyFacts from a statement or expression subtree."""

    def __init__(self, origin: str):
        self.origin = origin
        self.locals: list[tuple[str, str]] = []
        self.names: set[str] = set()
        self.this_fields: set[str] = set()
        self.calls: list[CallSite] = []
        self.type_refs: list[str] = []

    def facts(self) -> BodyFacts:
        return BodyFacts(
            origin=self.origin,
            locals=tuple(self.locals),
            names=frozenset(self.names),
            this_fields=frozenset(self.this_fields),
            calls=tuple(self.calls),
            type_refs=tuple(self.type_refs),
        )

    def declare(self, type_node: Node | None, name_node: Node | None) -> None:
        if name_node is not None:
            self.locals.append((_text(name_node), base_type(type_node)))
        self.type_refs.extend(type_names(type_node))

    def scan(self, node: Node | None) -> None:
        if node is None:
            return
        stack = [node]
        while stack:
            n = stack.pop()
            if n is None:
                continue
            t = n.type
            if t in TYPE_DECLARATIONS or t in ("class_body", "local_class_declaration"):
                continue
            if t == "identifier":
                self.names.add(_text(n))
                continue
            if t == "local_variable_declaration":
                type_node = n.child_by_field_name("type")
                self.type_refs.extend(type_names(type_node))
                for d in n.children_by_field_name("declarator"):
                    self.locals.append((_text(d.child_by_field_name("name")), base_type(type_node)))
                    stack.append(d.child_by_field_name("value"))
                continue
            if t in ("formal_parameter", "spread_parameter", "resource", "enhanced_for_statement"):
                if t == "spread_parameter":
                    type_node = next((c for c in n.named_children if c.type not in ("modifiers", "variable_declarator")), None)
                    decl = next((c for c in n.named_children if c.type == "variable_declarator"), None)
                    name_node = decl.child_by_field_name("name") if decl is not None else None
                else:
                    type_node = n.child_by_field_name("type")
                    name_node = n.child_by_field_name("name")
                if t == "resource" and name_node is None:
                    stack.extend(n.named_children)
                    continue
                self.declare(type_node, name_node)
                for fname in ("value", "body"):
                    stack.append(n.child_by_field_name(fname))
                continue
            if t == "catch_formal_parameter":
                for c in n.named_children:
                    if c.type == "catch_type":
                        for tn in c.named_children:
                            self.type_refs.extend(type_names(tn))
                name_node = n.child_by_field_name("name")
                if name_node is not None:
                    self.locals.append((_text(name_node), ""))
                continue
            if t == "lambda_expression":
                params = n.child_by_field_name("parameters")
                if params is not None:
                    if params.type == "identifier":
                        self.locals.append((_text(params), ""))
                    elif params.type == "inferred_parameters":
                        self.locals.extend((_text(p), "") for p in params.named_children)
                    else:
                        stack.append(params)
                stack.append(n.child_by_field_name("body"))
                continue
            if t == "object_creation_expression":
                type_node = n.child_by_field_name("type")
                self.type_refs.extend(type_names(type_node))
                stack.append(n.child_by_field_name("arguments"))
                obj = n.child_by_field_name("object") if n.child_by_field_name("object") else None
                if obj is not None:
                    stack.append(obj)
                continue
            if t == "method_invocation":
                self.calls.append(self._call(n))
                obj = n.child_by_field_name("object")
                if obj is not None and obj.type not in ("identifier", "this", "super"):
                    stack.append(obj)
                elif obj is not None and obj.type == "identifier":
                    self.names.add(_text(obj))
                stack.append(n.child_by_field_name("arguments"))
                continue
            if t == "field_access":
                obj = n.child_by_field_name("object")
                if obj is not None and obj.type == "this":
                    self.this_fields.add(_text(n.child_by_field_name("field")))
                else:
                    stack.append(obj)
                continue
            if t in ("cast_expression", "instanceof_expression", "class_literal"):
                for c in n.named_children:
                    if c.type in ("type_identifier", "generic_type", "scoped_type_identifier", "array_type"):
                        continue
                    stack.append(c)
                continue
            if t in ("labeled_statement", "break_statement", "continue_statement"):
                stack.extend(c for c in n.named_children if c.type != "identifier")
                continue
            if t in ("line_comment", "block_comment", "marker_annotation", "annotation"):
                continue
            stack.extend(reversed(n.named_children))

    def _call(self, n: Node) -> CallSite:
        obj = n.child_by_field_name("object")
        name = _text(n.child_by_field_name("name"))
        args = n.child_by_field_name("arguments")
        argc = len(args.named_children) if args is not None else 0
        line = n.start_point[0] + 1
        if obj is None:
            receiver = ("implicit", "")
        elif obj.type in ("this", "super"):
            receiver = (obj.type, "")
        elif obj.type == "identifier":
            receiver = ("name", _text(obj))
        elif obj.type == "object_creation_expression" and obj.child_by_field_name("type") is not None:
            receiver = ("new", base_type(obj.child_by_field_name("type")))
        elif obj.type == "field_access" and obj.child_by_field_name("object").type == "this":
            receiver = ("this_field", _text(obj.child_by_field_name("field")))
        elif obj.type in ("field_access", "scoped_identifier") and re.fullmatch(r"[\w.$]+", _text(obj)):
            receiver = ("scoped", _text(obj))
        else:
            receiver = ("other", "")
        return CallSite(receiver, name, argc, line)


def _scan(origin: str, *nodes: Node | None) -> BodyFacts:
    scanner = _BodyScanner(origin)
    for node in nodes:
        scanner.scan(node)
    return scanner.facts()


def _param_list(params: Node | None) -> tuple[tuple[str, str], ...]:
    if params is None:
        return ()
    out = []
    for p in params.named_children:
        if p.type == "formal_parameter":
            out.append((_text(p.child_by_field_name("name")), strip_type(_text(p.child_by_field_name("type")))))
        elif p.type == "spread_parameter":
            type_node = next((c for c in p.named_children if c.type not in ("modifiers", "variable_declarator")), None)
            decl = next((c for c in p.named_children if c.type == "variable_declarator"), None)
            name = _text(decl.child_by_field_name("name")) if decl is not None else ""
            out.append((name, strip_type(_text(type_node))))
    return tuple(out)


def classify_lines(source: bytes, root: Node) -> tuple[set[int], set[int], int]:
    """Return (comment lines, logical lines, line count), 1-based.

    A line is a comment line when any part of it lies inside a comment, and
    logical when it holds any non-whitespace character outside comments.
    """
    code = bytearray(source)
    comment_lines: set[int] = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if n.type in ("line_comment", "block_comment"):
            start, end = _line_span(n)
            comment_lines.update(range(start, end + 1))
            chunk = source[n.start_byte : n.end_byte]
            code[n.start_byte : n.end_byte] = re.sub(rb"[^\n]", b" ", chunk)
            continue
        stack.extend(n.children)
    lines = bytes(code).split(b"\n")
    logical = {i for i, line in enumerate(lines, start=1) if line.strip()}
    return comment_lines, logical, len(lines)


class _FileParser:
    def __init__(self, source: bytes, path: str):
        self.source = source
        self.path = path
        self.package = ""
        self.imports: list[str] = []
        self.entities: list[ClassEntity] = []
        self.diagnostics: list[Diagnostic] = []
        self.comment_lines: set[int] = set()
        self.logical_lines: set[int] = set()

    def run(self, tree) -> None:
        root = tree.root_node
        self.comment_lines, self.logical_lines, _ = classify_lines(self.source, root)
        for c in root.named_children:
            if c.type == "package_declaration":
                self.package = next(
                    (_text(x) for x in c.named_children if x.type in ("identifier", "scoped_identifier")), ""
                )
            elif c.type == "import_declaration":
                if "static" in (x.type for x in c.children):
                    continue
                name = next((_text(x) for x in c.named_children if x.type in ("identifier", "scoped_identifier")), "")
                if any(x.type == "asterisk" for x in c.named_children):
                    name += ".*"
                self.imports.append(name)
        self._walk(root, enclosing=None, in_code=False)

    def _walk(self, node: Node, enclosing: ClassEntity | None, in_code: bool, counters=None) -> None:
        # counters: per-enclosing-entity numbering state for anonymous and local classes
        for c in node.children:
            t = c.type
            if t in TYPE_DECLARATIONS:
                nesting = TOP_LEVEL if enclosing is None else (LOCAL if in_code else NESTED)
                self._declare(c, enclosing, nesting, counters)
            elif t == "local_class_declaration":
                self._walk(c, enclosing, in_code, counters)
            elif t == "class_body" and node.type in ("object_creation_expression", "enum_constant"):
                self._anonymous(node, c, enclosing, counters)
            elif t in ("line_comment", "block_comment"):
                continue
            else:
                entered_code = in_code or t in (
                    "block",
                    "constructor_body",
                    "static_initializer",
                    "variable_declarator",
                    "lambda_expression",
                    "argument_list",
                )
                self._walk(c, enclosing, entered_code, counters)

    def _anonymous(self, creation: Node, body: Node, enclosing: ClassEntity | None, counters) -> None:
        if enclosing is None:
            return
        counters["anon"] += 1
        fqn = f"{enclosing.fqn}$anon{counters['anon']}"
        if creation.type == "enum_constant":
            supers = (enclosing.simple_name,)
        else:
            supers = (strip_type(_text(creation.child_by_field_name("type"))),)
        self._build(creation, body, fqn, fqn.rsplit(".", 1)[-1], "class", ANONYMOUS, supers, enclosing, (), None)

    def _declare(self, decl: Node, enclosing: ClassEntity | None, nesting: str, counters) -> None:
        name = _text(decl.child_by_field_name("name"))
        if enclosing is None:
            fqn = f"{self.package}.{name}" if self.package else name
        elif nesting == LOCAL:
            key = "local:" + name
            counters[key] += 1
            fqn = f"{enclosing.fqn}${counters[key]}{name}"
        else:
            fqn = f"{enclosing.fqn}.{name}"
        supers: list[str] = []
        for fname in ("superclass", "interfaces"):
            sub = decl.child_by_field_name(fname)
            if sub is not None:
                supers.extend(self._listed_types(sub))
        for c in decl.named_children:
            if c.type == "extends_interfaces":
                supers.extend(self._listed_types(c))
        tparams = decl.child_by_field_name("type_parameters")
        tp_names = tuple(
            _text(p.named_children[0]) for p in (tparams.named_children if tparams else []) if p.named_children
        )
        kind = TYPE_DECLARATIONS[decl.type]
        self._build(decl, decl.child_by_field_name("body"), fqn, name, kind, nesting, tuple(supers), enclosing, tp_names, decl)

    @staticmethod
    def _listed_types(node: Node) -> list[str]:
        out = []
        for c in node.named_children:
            if c.type == "type_list":
                out.extend(strip_type(_text(x)) for x in c.named_children)
            elif c.type not in ("type_arguments",):
                out.append(strip_type(_text(c)))
        return out

    def _build(
        self,
        span_node: Node,
        body: Node | None,
        fqn: str,
        simple_name: str,
        kind: str,
        nesting: str,
        supers: tuple[str, ...],
        enclosing: ClassEntity | None,
        tp_names: tuple[str, ...],
        decl: Node | None,
    ) -> None:
        span = _line_span(body if nesting == ANONYMOUS else span_node)
        implicit_public = kind in ("interface", "annotation")
        fields: list[FieldDecl] = []
        methods: list[MethodDecl] = []
        init_blocks: list[Node] = []
        bodies: list[BodyFacts] = []
        type_refs: list[str] = []
        for s in supers:
            type_refs.append(s)
        if decl is not None:
            for fname in ("superclass", "interfaces"):
                sub = decl.child_by_field_name(fname)
                if sub is not None:
                    for c in sub.named_children:
                        for tn in c.named_children if c.type == "type_list" else [c]:
                            type_refs.extend(type_names(tn)[1:])
        if decl is not None and decl.type == "record_declaration":
            for name, tname in _param_list(decl.child_by_field_name("parameters")):
                fields.append(FieldDecl(name, tname, "private", False, span[0]))
            params = decl.child_by_field_name("parameters")
            for p in params.named_children if params else []:
                type_refs.extend(type_names(p.child_by_field_name("type")))

        members: list[Node] = []
        if body is not None:
            for c in body.named_children:
                if c.type == "enum_body_declarations":
                    members.extend(c.named_children)
                else:
                    members.append(c)
        for m in members:
            t = m.type
            if t == "enum_constant":
                fields.append(FieldDecl(_text(m.child_by_field_name("name")), simple_name, "public", False, m.start_point[0] + 1))
                args = m.child_by_field_name("arguments")
                if args is not None:
                    bodies.append(_scan(INITIALIZER, args))
            elif t in ("field_declaration", "constant_declaration"):
                type_node = m.child_by_field_name("type")
                vis = _visibility(m, implicit_public or t == "constant_declaration")
                type_refs.extend(type_names(type_node))
                for d in m.children_by_field_name("declarator"):
                    value = d.child_by_field_name("value")
                    fname = _text(d.child_by_field_name("name"))
                    fields.append(FieldDecl(fname, base_type(type_node), vis, value is not None, d.start_point[0] + 1, value))
                    if value is not None:
                        bodies.append(_scan(f"<field:{fname}>", value))
            elif t in ("method_declaration", "constructor_declaration", "compact_constructor_declaration", "annotation_type_element_declaration"):
                methods.append(self._method(m, simple_name, implicit_public, kind))
                type_refs.extend(self._signature_types(m))
            elif t in ("static_initializer", "block"):
                init_blocks.append(m)
                bodies.append(_scan(INITIALIZER, m))

        comment_set = frozenset(x for x in self.comment_lines if span[0] <= x <= span[1])
        logical_set = frozenset(x for x in self.logical_lines if span[0] <= x <= span[1])
        entity = ClassEntity(
            fqn=fqn,
            kind=kind,
            file_path=self.path,
            span=span,
            nesting=nesting,
            supertype_names=supers,
            fields=tuple(fields),
            methods=tuple(methods),
            init_blocks=tuple(init_blocks),
            comment_lines=len(comment_set),
            logical_lines=len(logical_set),
            package=self.package,
            enclosing=enclosing.fqn if enclosing is not None else None,
            simple_name=simple_name,
            imports=tuple(self.imports),
            type_parameters=tp_names + (enclosing.type_parameters if enclosing is not None else ()),
            type_refs=tuple(type_refs),
            bodies=tuple(bodies) + tuple(mm.facts for mm in methods),
            comment_line_set=comment_set,
            logical_line_set=logical_set,
        )
        self.entities.append(entity)
        if body is not None:
            self._walk(body, entity, in_code=False, counters=defaultdict(int))

    def _method(self, m: Node, class_name: str, implicit_public: bool, kind: str) -> MethodDecl:
        is_ctor = m.type in ("constructor_declaration", "compact_constructor_declaration")
        name = _text(m.child_by_field_name("name")) or class_name
        params = _param_list(m.child_by_field_name("parameters"))
        signature = ",".join(t for _, t in params)
        if kind == "enum" and is_ctor:
            vis = _visibility(m, False)
            vis = "private" if vis == "package" else vis
        else:
            vis = _visibility(m, implicit_public)
        body = m.child_by_field_name("body")
        scanner = _BodyScanner(f"{name}({signature})")
        for pname, ptype in params:
            scanner.locals.append((pname, ptype))
        scanner.scan(body)
        return MethodDecl(name, signature, vis, params, is_ctor, m.start_point[0] + 1, scanner.facts(), body)

    @staticmethod
    def _signature_types(m: Node) -> list[str]:
        out = type_names(m.child_by_field_name("type"))
        params = m.child_by_field_name("parameters")
        for p in params.named_children if params is not None else []:
            if p.type == "formal_parameter":
                out.extend(type_names(p.child_by_field_name("type")))
            elif p.type == "spread_parameter":
                out.extend(
                    n for c in p.named_children if c.type not in ("modifiers", "variable_declarator") for n in type_names(c)
                )
        tparams = m.child_by_field_name("type_parameters")
        if tparams is not None:
            hidden = {_text(p.named_children[0]) for p in tparams.named_children if p.named_children}
            out = [t for t in out if t not in hidden]
        return out


def _make_parser() -> Parser:
    return Parser(JAVA)


def _first_error_line(node: Node) -> int:
    stack = [node]
    while stack:
        n = stack.pop()
        if n.type == "ERROR" or n.is_missing:
            return n.start_point[0] + 1
        if n.has_error:
            stack.extend(reversed(n.children))
    return node.start_point[0] + 1


def parse_compilation_unit(source: str | bytes, path: str) -> tuple[list[ClassEntity], list[Diagnostic]]:
    """Parse one Java file into class entities (nested, anonymous and local
    classes included) plus diagnostics for recoverable problems.

    Raises ParseError when the file has syntax errors and no type declaration
    could be recovered from it.
    """
    data = source.encode("utf-8") if isinstance(source, str) else source
    tree = _make_parser().parse(data)
    fp = _FileParser(data, path)
    fp.run(tree)
    if tree.root_node.has_error:
        line = _first_error_line(tree.root_node)
        if not fp.entities:
            raise ParseError(path, line)
        fp.diagnostics.append(Diagnostic("syntax", "recovered from syntax error", path, line))
    return fp.entities, fp.diagnostics


def load_snapshot(root: str | Path) -> tuple[list[ClassEntity], list[Diagnostic]]:
    """Parse every ``.java`` file below ``root``; paths are stored relative to it."""
    root = Path(root)
    entities: list[ClassEntity] = []
    diagnostics: list[Diagnostic] = []
    for path in sorted(root.rglob("*.java")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        raw = path.read_bytes()
        try:
            raw.decode("utf-8")
        except UnicodeDecodeError:
            diagnostics.append(Diagnostic("encoding", "not valid UTF-8, decoded as latin-1", rel))
            raw = raw.decode("latin-1").encode("utf-8")
        try:
            found, diags = parse_compilation_unit(raw, rel)
        except ParseError as exc:
            diagnostics.append(Diagnostic("parse", str(exc), rel, exc.line))
            continue
        entities.extend(found)
        diagnostics.extend(diags)
    return entities, diagnostics


@dataclass(frozen=True)
class MethodRef:
    owner: str
    name: str
    signature: str

    def __str__(self) -> str:
        return f"{self.owner}#{self.name}({self.signature})"


@dataclass(frozen=True)
class ProjectModel:
    entities: Mapping[str, ClassEntity]
    inherits: frozenset[tuple[str, str]]
    uses: frozenset[tuple[str, str]]
    invokes: frozenset[tuple[tuple[str, str], MethodRef]]
    unresolved: frozenset[str]
    diagnostics: tuple[Diagnostic, ...] = ()

    def named(self) -> list[ClassEntity]:
        """Top-level and nested named classes, the ones that get metric rows."""
        return [e for e in self.entities.values() if e.is_named]

    @cached_property
    def _children(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = defaultdict(list)
        for e in self.entities.values():
            if e.enclosing is not None:
                index[e.enclosing].append(e.fqn)
        return index

    def descendants(self, fqn: str) -> list[ClassEntity]:
        """Every entity lexically inside ``fqn``, at any depth."""
        out, stack = [], list(self._children.get(fqn, ()))
        while stack:
            cur = stack.pop()
            out.append(self.entities[cur])
            stack.extend(self._children.get(cur, ()))
        return out

    def named_ancestor(self, fqn: str) -> ClassEntity:
        """The entity itself if named, else its closest named enclosing entity."""
        e = self.entities[fqn]
        while not e.is_named and e.enclosing is not None:
            e = self.entities[e.enclosing]
        return e


class _Resolver:
    def __init__(self, entities: Mapping[str, ClassEntity]):
        self.entities = entities
        self.diagnostics: list[Diagnostic] = []
        self.unresolved: set[str] = set()

    def resolve(self, name: str, ctx: ClassEntity) -> str | None:
        name = strip_type(name)
        if not name or name in ctx.type_parameters:
            return None
        found = self._lookup(name, ctx)
        if found is None:
            self.unresolved.add(name)
        return found

    def _lookup(self, name: str, ctx: ClassEntity) -> str | None:
        if "." in name:
            if name in self.entities:
                return name
            head, rest = name.split(".", 1)
            base = self._simple(head, ctx)
            if base is not None and f"{base}.{rest}" in self.entities:
                return f"{base}.{rest}"
            return None
        return self._simple(name, ctx)

    def _simple(self, name: str, ctx: ClassEntity) -> str | None:
        e: ClassEntity | None = ctx
        while e is not None:
            if e.is_named and e.simple_name == name:
                return e.fqn
            member = f"{e.fqn}.{name}"
            if member in self.entities:
                return member
            e = self.entities.get(e.enclosing) if e.enclosing else None
        for imp in ctx.imports:
            if not imp.endswith(".*") and imp.rsplit(".", 1)[-1] == name:
                return imp if imp in self.entities else None
        same_pkg = f"{ctx.package}.{name}" if ctx.package else name
        if same_pkg in self.entities:
            return same_pkg
        candidates = sorted({f"{imp[:-2]}.{name}" for imp in ctx.imports if imp.endswith(".*")} & self.entities.keys())
        if len(candidates) > 1:
            self.diagnostics.append(
                Diagnostic("ambiguous-name", f"{name} matches {', '.join(candidates)}", ctx.file_path, ctx.span[0])
            )
            return None
        return candidates[0] if candidates else None


def build_project_model(entities: Iterable[ClassEntity]) -> ProjectModel:
    """Resolve the references of one snapshot's entities into a ProjectModel.

    Only named (top-level or nested) entities take part in the graphs; anonymous
    and local classes stay in ``entities`` so their lines can be excluded.
    """
    by_fqn: dict[str, ClassEntity] = {}
    diagnostics: list[Diagnostic] = []
    for e in entities:
        if e.fqn in by_fqn:
            other = by_fqn[e.fqn]
            diagnostics.append(
                Diagnostic("duplicate-fqn", f"{e.fqn} already declared in {other.file_path}", e.file_path, e.span[0])
            )
            continue
        by_fqn[e.fqn] = e
    resolver = _Resolver(by_fqn)

    def target(name: str, ctx: ClassEntity) -> str | None:
        fqn = resolver.resolve(name, ctx)
        if fqn is None:
            return None
        return fqn if by_fqn[fqn].is_named else None

    inherits: set[tuple[str, str]] = set()
    uses: set[tuple[str, str]] = set()
    supertypes: dict[str, list[str]] = {}
    named = [e for e in by_fqn.values() if e.is_named]
    for e in named:
        supers = []
        for s in e.supertype_names:
            t = target(s, e)
            if t is not None and t != e.fqn:
                inherits.add((e.fqn, t))
                supers.append(t)
        supertypes[e.fqn] = supers
    _check_acyclic(supertypes)

    def ancestry(fqn: str) -> list[str]:
        order, seen, queue = [], {fqn}, [fqn]
        while queue:
            cur = queue.pop(0)
            order.append(cur)
            for s in supertypes.get(cur, []):
                if s not in seen:
                    seen.add(s)
                    queue.append(s)
        return order

    def field_type(owner: str, name: str) -> tuple[str, ClassEntity] | None:
        for a in ancestry(owner):
            for f in by_fqn[a].fields:
                if f.name == name:
                    return f.type_name, by_fqn[a]
        return None

    def find_method(owner: str, name: str, argc: int) -> MethodRef | None:
        for a in ancestry(owner):
            for m in by_fqn[a].methods:
                if m.name == name and not m.is_constructor and len(m.params) == argc:
                    return MethodRef(a, m.name, m.signature)
        return None

    invokes: set[tuple[tuple[str, str], MethodRef]] = set()
    for e in named:
        for ref in e.type_refs:
            t = target(ref, e)
            if t is not None and t != e.fqn:
                uses.add((e.fqn, t))
        for facts in e.bodies:
            local_types = dict(facts.locals)
            for ref in facts.type_refs:
                t = target(ref, e)
                if t is not None and t != e.fqn:
                    uses.add((e.fqn, t))
            for call in facts.calls:
                kind, text = call.receiver
                owners: list[str] = []
                if kind in ("implicit", "this"):
                    owners = [e.fqn]
                    if kind == "implicit":
                        outer = e.enclosing
                        while outer is not None:
                            if by_fqn[outer].is_named:
                                owners.append(outer)
                            outer = by_fqn[outer].enclosing
                elif kind == "super":
                    owners = list(supertypes.get(e.fqn, []))
                elif kind == "name":
                    if text in local_types:
                        tname = local_types[text]
                        t = target(tname, e) if tname else None
                    else:
                        hit = None
                        scope: ClassEntity | None = e
                        while scope is not None and hit is None:
                            hit = field_type(scope.fqn, text) if scope.is_named else None
                            scope = by_fqn.get(scope.enclosing) if scope.enclosing else None
                        if hit is not None:
                            t = target(hit[0], hit[1]) if hit[0] else None
                        else:
                            t = target(text, e)
                            if t is not None and t != e.fqn:
                                uses.add((e.fqn, t))
                    if t is not None:
                        owners = [t]
                elif kind == "this_field":
                    hit = field_type(e.fqn, text)
                    t = target(hit[0], hit[1]) if hit and hit[0] else None
                    owners = [t] if t else []
                elif kind in ("new", "scoped"):
                    t = target(text, e)
                    if t is not None:
                        owners = [t]
                        if t != e.fqn:
                            uses.add((e.fqn, t))
                for owner in owners:
                    callee = find_method(owner, call.name, call.arg_count)
                    if callee is not None:
                        invokes.add(((e.fqn, facts.origin), callee))
                        break
    diagnostics.extend(resolver.diagnostics)
    return ProjectModel(
        entities=MappingProxyType(by_fqn),
        inherits=frozenset(inherits),
        uses=frozenset(uses),
        invokes=frozenset(invokes),
        unresolved=frozenset(resolver.unresolved),
        diagnostics=tuple(diagnostics),
    )


def _check_acyclic(supertypes: Mapping[str, list[str]]) -> None:
    state: dict[str, int] = {}

    def visit(node: str, path: list[str]) -> None:
        state[node] = 1
        for nxt in supertypes.get(node, []):
            if state.get(nxt) == 1:
                raise ModelCycle(path[path.index(nxt) :] + [nxt] if nxt in path else [node, nxt])
            if nxt not in state:
                visit(nxt, path + [nxt])
        state[node] = 2

    for node in sorted(supertypes):
        if node not in state:
            visit(node, [node])
