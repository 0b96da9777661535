"""Experiment file parsing and the component DAG.

The experiment dialect is a deliberately small declarative language:
tables ``[a.b]``, arrays of tables ``[[a.b.c]]``, ``key = value`` pairs
with string/integer/float/boolean scalars (plus flat scalar arrays), and
``#`` comments.  Anything else is a syntax error — unsupported constructs
fail loudly rather than parse differently than the user meant.

Every table carrying a ``class`` key declares a component; nested tables
become its dependencies.  The graph is validated acyclic and instantiated
in topological order, with lexicographic tie-breaking so plans are stable
across runs.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import (
    ConfigSyntaxError,
    CycleDetected,
    DanglingReference,
    DuplicateId,
    ExtraParam,
    MissingClassKey,
    MissingParam,
    MissingSection,
    ParamTypeError,
    UnknownClass,
    UnknownSection,
    UnsupportedClass,
)

SECTION_NAMES = ("dataset", "model", "engine")

_BARE_KEY_RE = re.compile(r"^[A-Za-z0-9_-]+$")
_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+(?:\.[0-9]*)?[eE][+-]?[0-9]+)$")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


# ---------------------------------------------------------------------------
# text -> value tree


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_string:
            if ch == "\\" and i + 1 < len(line):
                out.append(line[i : i + 2])
                i += 2
                continue
            if ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "#":
            break
        out.append(ch)
        i += 1
    return "".join(out)


def _parse_string(text: str, line_no: int) -> tuple[str, str]:
    """Parse a leading double-quoted string; returns (value, rest)."""
    assert text[0] == '"'
    out = []
    i = 1
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _ESCAPES:
                raise ConfigSyntaxError(line_no, f"bad escape in string: {text!r}")
            out.append(_ESCAPES[text[i + 1]])
            i += 2
            continue
        if ch == '"':
            return "".join(out), text[i + 1 :]
        out.append(ch)
        i += 1
    raise ConfigSyntaxError(line_no, "unterminated string")


def _parse_bare_scalar(token: str, line_no: int):
    if token in ("true", "True"):
        return True
    if token in ("false", "False"):
        return False
    if _INT_RE.match(token):
        return int(token)
    if _FLOAT_RE.match(token):
        return float(token)
    raise ConfigSyntaxError(line_no, f"cannot parse value {token!r}")


def _parse_value(text: str, line_no: int):
    text = text.strip()
    if not text:
        raise ConfigSyntaxError(line_no, "missing value")
    if text.startswith('"'):
        value, rest = _parse_string(text, line_no)
        if rest.strip():
            raise ConfigSyntaxError(line_no, f"trailing characters after string: {rest!r}")
        return value
    if text.startswith("["):
        return _parse_array(text, line_no)
    return _parse_bare_scalar(text, line_no)


def _parse_array(text: str, line_no: int) -> list:
    """One flat array of scalars on a single line; nesting is unsupported."""
    body = text[1:]
    items: list = []
    while True:
        body = body.lstrip()
        if not body:
            raise ConfigSyntaxError(line_no, "unterminated array")
        if body.startswith("]"):
            if body[1:].strip():
                raise ConfigSyntaxError(line_no, f"trailing characters after array")
            return items
        if body.startswith("["):
            raise ConfigSyntaxError(line_no, "nested arrays are not supported")
        if body.startswith('"'):
            value, body = _parse_string(body, line_no)
        else:
            m = re.match(r"[^,\]]+", body)
            value = _parse_bare_scalar(m.group().strip(), line_no)
            body = body[m.end() :]
        items.append(value)
        body = body.lstrip()
        if body.startswith(","):
            body = body[1:]
        elif not body.startswith("]"):
            raise ConfigSyntaxError(line_no, "expected ',' or ']' in array")


def _parse_table_path(text: str, line_no: int) -> list[str]:
    segments = text.strip().split(".")
    for seg in segments:
        if not _BARE_KEY_RE.match(seg.strip()):
            raise ConfigSyntaxError(line_no, f"bad table name segment {seg!r}")
    return [s.strip() for s in segments]


def parse_config_text(text: str) -> dict:
    """Parse the config dialect into nested dicts/lists of scalars."""
    root: dict = {}
    current = root
    explicit: set[tuple[str, ...]] = set()

    def descend(path: list[str], line_no: int, parent_only: bool) -> Any:
        node: Any = root
        upto = path[:-1] if parent_only else path
        for seg in upto:
            if isinstance(node, list):
                node = node[-1]
            if seg not in node:
                node[seg] = {}
            node = node[seg]
            if isinstance(node, list):
                node = node[-1]
            if not isinstance(node, dict):
                raise ConfigSyntaxError(line_no, f"{seg!r} is not a table")
        return node

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[["):
            if not line.endswith("]]"):
                raise ConfigSyntaxError(line_no, "malformed array-of-tables header")
            path = _parse_table_path(line[2:-2], line_no)
            parent = descend(path, line_no, parent_only=True)
            leaf = path[-1]
            existing = parent.get(leaf)
            if existing is None:
                parent[leaf] = [dict()]
            elif isinstance(existing, list) and all(isinstance(e, dict) for e in existing):
                existing.append(dict())
            else:
                raise ConfigSyntaxError(line_no, f"{leaf!r} already defined as a non-array")
            current = parent[leaf][-1]
        elif line.startswith("["):
            if not line.endswith("]"):
                raise ConfigSyntaxError(line_no, "malformed table header")
            path = _parse_table_path(line[1:-1], line_no)
            parent = descend(path, line_no, parent_only=True)
            leaf = path[-1]
            existing = parent.get(leaf)
            if existing is None:
                parent[leaf] = {}
            elif not isinstance(existing, dict) or tuple(path) in explicit:
                raise ConfigSyntaxError(line_no, f"table {'.'.join(path)!r} redefined")
            explicit.add(tuple(path))
            current = parent[leaf]
        else:
            if "=" not in line:
                raise ConfigSyntaxError(line_no, f"expected key = value, got {line!r}")
            key, _, value_text = line.partition("=")
            key = key.strip()
            if not _BARE_KEY_RE.match(key):
                raise ConfigSyntaxError(line_no, f"bad key {key!r}")
            if key in current:
                raise ConfigSyntaxError(line_no, f"duplicate key {key!r}")
            current[key] = _parse_value(value_text, line_no)
    return root


# ---------------------------------------------------------------------------
# value tree -> component graph


@dataclass
class ComponentDecl:
    """One declared component: class name, scalar params, child roles."""

    id: str
    class_name: str
    params: dict[str, Any]
    deps: list[tuple[str, str]] = field(default_factory=list)  # (role, child id)


@dataclass
class ComponentGraph:
    nodes: dict[str, ComponentDecl] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)  # dependency -> dependent
    sections: dict[str, str] = field(default_factory=dict)

    def add(self, decl: ComponentDecl) -> None:
        if decl.id in self.nodes:
            raise DuplicateId(decl.id)
        self.nodes[decl.id] = decl


@dataclass
class InstantiationPlan:
    order: list[str]


def _build_decl(table: dict, node_id: str, graph: ComponentGraph) -> None:
    params: dict[str, Any] = {}
    deps: list[tuple[str, str]] = []
    class_name = table.get("class")
    for key, value in table.items():
        if key == "class":
            continue
        if isinstance(value, dict):
            child_id = f"{node_id}.{key}"
            _build_decl(value, child_id, graph)
            deps.append((key, child_id))
            graph.edges.append((child_id, node_id))
        elif isinstance(value, list) and value and all(isinstance(v, dict) for v in value):
            for i, sub in enumerate(value):
                child_id = f"{node_id}.{key}[{i}]"
                _build_decl(sub, child_id, graph)
                deps.append((key, child_id))
                graph.edges.append((child_id, node_id))
        else:
            params[key] = value
    if class_name is None:
        # the engine section is pure hyperparameters; it gets the implicit
        # trainer class rather than forcing a class key nobody would vary
        if node_id == "engine":
            class_name = "Engine"
        else:
            raise MissingClassKey(node_id)
    if not isinstance(class_name, str) or not class_name:
        raise ConfigSyntaxError(0, f"[{node_id}] 'class' must be a non-empty string")
    graph.add(ComponentDecl(id=node_id, class_name=class_name, params=params, deps=deps))


def parse_experiment_text(
    text: str, required_sections: tuple[str, ...] = ("model",)
) -> ComponentGraph:
    tree = parse_config_text(text)
    for key, value in tree.items():
        if key not in SECTION_NAMES:
            raise UnknownSection(key)
        if not isinstance(value, dict):
            raise ConfigSyntaxError(0, f"top-level {key!r} must be a table")
    for name in required_sections:
        if name not in tree:
            raise MissingSection(name)
    graph = ComponentGraph()
    for section in SECTION_NAMES:
        if section in tree:
            _build_decl(tree[section], section, graph)
            graph.sections[section] = section
    validate_graph(graph)
    return graph


def parse_experiment(
    path: str | Path, required_sections: tuple[str, ...] = ("model",)
) -> ComponentGraph:
    """Parse and validate an experiment file into a component graph."""
    return parse_experiment_text(
        Path(path).read_text(encoding="utf-8"), required_sections
    )


def validate_graph(graph: ComponentGraph) -> None:
    """Reject dangling references and cycles (DFS three-coloring)."""
    for src, dst in graph.edges:
        if src not in graph.nodes:
            raise DanglingReference(dst, src)
        if dst not in graph.nodes:
            raise DanglingReference(src, dst)

    outgoing: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    for src, dst in graph.edges:
        outgoing[src].append(dst)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {nid: WHITE for nid in graph.nodes}

    def visit(start: str) -> None:
        stack = [(start, iter(outgoing[start]))]
        trail = [start]
        color[start] = GRAY
        while stack:
            node, children = stack[-1]
            advanced = False
            for child in children:
                if color[child] == GRAY:
                    cycle = trail[trail.index(child) :] + [child]
                    raise CycleDetected(cycle)
                if color[child] == WHITE:
                    color[child] = GRAY
                    stack.append((child, iter(outgoing[child])))
                    trail.append(child)
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
                trail.pop()

    for nid in sorted(graph.nodes):
        if color[nid] == WHITE:
            visit(nid)


def topo_order(graph: ComponentGraph) -> InstantiationPlan:
    """Kahn's algorithm; simultaneously-ready nodes come out in id order."""
    indegree = {nid: 0 for nid in graph.nodes}
    outgoing: dict[str, list[str]] = {nid: [] for nid in graph.nodes}
    for src, dst in graph.edges:
        if src not in graph.nodes or dst not in graph.nodes:
            raise DanglingReference(src, dst)
        indegree[dst] += 1
        outgoing[src].append(dst)
    ready = [nid for nid, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        nid = heapq.heappop(ready)
        order.append(nid)
        for dst in outgoing[nid]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                heapq.heappush(ready, dst)
    if len(order) != len(graph.nodes):
        raise CycleDetected(sorted(nid for nid in graph.nodes if indegree[nid] > 0))
    return InstantiationPlan(order=order)


# ---------------------------------------------------------------------------
# registry and instantiation


@dataclass
class ParamSpec:
    typ: type
    required: bool = True
    default: Any = None
    choices: tuple | None = None


@dataclass
class DepSpec:
    required: bool = True
    many: bool = False


@dataclass
class ComponentSchema:
    params: dict[str, ParamSpec]
    deps: dict[str, DepSpec]
    build: Callable[[dict, dict, Any, str], Any]


@dataclass
class Registry:
    specs: dict[str, ComponentSchema] = field(default_factory=dict)
    unsupported: dict[str, str] = field(default_factory=dict)

    def known_classes(self) -> list[str]:
        return sorted(self.specs)


_TYPE_NAMES = {str: "string", int: "integer", float: "float", bool: "boolean", list: "array"}


def _check_param(node_id: str, key: str, value: Any, spec: ParamSpec) -> Any:
    expected = _TYPE_NAMES[spec.typ]
    if spec.typ is bool:
        ok = isinstance(value, bool)
    elif spec.typ is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif spec.typ is float:
        # integer literals widen to float; strings never coerce to numbers
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif spec.typ is str:
        ok = isinstance(value, str)
    elif spec.typ is list:
        ok = isinstance(value, list)
    else:  # pragma: no cover - schema authoring error
        raise TypeError(f"unsupported schema type {spec.typ}")
    if not ok:
        raise ParamTypeError(node_id, key, expected)
    if spec.choices is not None and value not in spec.choices:
        raise ParamTypeError(node_id, key, f"one of {', '.join(map(str, spec.choices))}")
    return value


def validate_params(node_id: str, params: dict, schema: ComponentSchema) -> dict:
    """Exact-typed parameter resolution: unknown or missing keys are errors."""
    resolved = {}
    for key, value in params.items():
        if key not in schema.params:
            raise ExtraParam(node_id, key)
        resolved[key] = _check_param(node_id, key, value, schema.params[key])
    for key, spec in schema.params.items():
        if key not in resolved:
            if spec.required:
                raise MissingParam(node_id, key)
            resolved[key] = spec.default
    return resolved


def instantiate(
    plan: InstantiationPlan,
    graph: ComponentGraph,
    registry: Registry,
    ctx: Any = None,
) -> dict[str, Any]:
    """Construct every component in plan order, wiring children by role.

    Returns all built instances keyed by node id; section roots sit under
    their section names.
    """
    instances: dict[str, Any] = {}
    for node_id in plan.order:
        decl = graph.nodes[node_id]
        if decl.class_name in registry.unsupported:
            raise UnsupportedClass(decl.class_name, registry.unsupported[decl.class_name])
        schema = registry.specs.get(decl.class_name)
        if schema is None:
            raise UnknownClass(decl.class_name)
        params = validate_params(node_id, decl.params, schema)

        grouped: dict[str, list[Any]] = {}
        for role, child_id in decl.deps:
            grouped.setdefault(role, []).append(instances[child_id])
        deps: dict[str, Any] = {}
        for role, children in grouped.items():
            spec = schema.deps.get(role)
            if spec is None:
                raise ExtraParam(node_id, role)
            if not spec.many and len(children) > 1:
                raise ExtraParam(node_id, role)
            deps[role] = children if spec.many else children[0]
        for role, spec in schema.deps.items():
            if role not in deps:
                if spec.required:
                    raise MissingParam(node_id, role)
                deps[role] = [] if spec.many else None

        instances[node_id] = schema.build(params, deps, ctx, node_id)
    return instances
