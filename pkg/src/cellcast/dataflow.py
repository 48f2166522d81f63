"""Logic flow over code cells: per-cell name analysis, dependency edges,
hierarchical splitting and visibility.

The deterministic AST analysis below is the source of truth for inputs,
outputs and edges. Generated description text (or any externally reported
inputs/outputs) is attached as advisory metadata and never alters edges.
"""

from __future__ import annotations

import ast
import builtins
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import InvalidBoundary, UnknownNode
from .notebook import Notebook, code_cells

BUILTIN_NAMES = frozenset(dir(builtins))

# string literals with these extensions count as file inputs, e.g. "data.csv"
DATA_FILE_EXTENSIONS = (
    ".csv", ".tsv", ".json", ".xlsx", ".xls", ".txt", ".parquet", ".feather",
    ".png", ".jpg", ".jpeg", ".h5", ".hdf5", ".pkl", ".pickle", ".npy", ".npz",
    ".zip", ".gz", ".html", ".xml", ".db", ".sqlite", ".dat",
)

_FILE_LITERAL_RE = re.compile(r"^[\w./ -]+$")


@dataclass(frozen=True)
class NameAnalysis:
    defined: frozenset[str]
    referenced: frozenset[str]
    error: str | None = None  # set when the source does not parse


@dataclass(frozen=True)
class FlowNode:
    id: int  # code cell index
    description: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    hidden: bool = False
    children: tuple[FlowNode, ...] = ()
    line_range: tuple[int, int] | None = None  # set on children only, half-open
    diagnostic: str | None = None
    llm_inputs: tuple[str, ...] | None = None  # advisory, never drives edges
    llm_outputs: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Edge:
    producer: int
    consumer: int
    name: str


@dataclass(frozen=True)
class LogicFlow:
    nodes: tuple[FlowNode, ...]
    edges: tuple[Edge, ...]

    def node(self, node_id: int) -> FlowNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise UnknownNode(f"no flow node with id {node_id}")

    def visible_nodes(self) -> list[FlowNode]:
        return [node for node in self.nodes if not node.hidden]


class _ScopeVisitor(ast.NodeVisitor):
    """Collect top-level bindings and free names read before local (re)binding.

    Control flow is ignored: any read of a name not yet bound in this cell
    counts as a reference. Attribute writes (df.x = 1) bind nothing.
    """

    def __init__(self):
        self.defined: set[str] = set()
        self.referenced: set[str] = set()

    def _bind(self, name: str) -> None:
        self.defined.add(name)

    def _read(self, name: str) -> None:
        if name not in self.defined and name not in BUILTIN_NAMES:
            self.referenced.add(name)

    def visit_Name(self, node: ast.Name) -> None:
        if isinstance(node.ctx, ast.Load):
            self._read(node.id)
        elif isinstance(node.ctx, (ast.Store, ast.Del)):
            self._bind(node.id)

    def visit_Assign(self, node: ast.Assign) -> None:
        self.visit(node.value)  # RHS reads happen before the binding
        for target in node.targets:
            self.visit(target)

    def visit_AugAssign(self, node: ast.AugAssign) -> None:
        self.visit(node.value)
        if isinstance(node.target, ast.Name):
            self._read(node.target.id)  # x += 1 reads x first
            self._bind(node.target.id)
        else:
            self.visit(node.target)

    def visit_AnnAssign(self, node: ast.AnnAssign) -> None:
        if node.value is not None:
            self.visit(node.value)
        if isinstance(node.target, ast.Name):
            self._bind(node.target.id)
        else:
            self.visit(node.target)

    def visit_NamedExpr(self, node: ast.NamedExpr) -> None:
        self.visit(node.value)
        self._bind(node.target.id)

    def visit_For(self, node: ast.For) -> None:
        self.visit(node.iter)
        self.visit(node.target)
        for stmt in node.body + node.orelse:
            self.visit(stmt)

    def visit_Import(self, node: ast.Import) -> None:
        for alias in node.names:
            self._bind(alias.asname or alias.name.split(".")[0])

    def visit_ImportFrom(self, node: ast.ImportFrom) -> None:
        for alias in node.names:
            if alias.name != "*":
                self._bind(alias.asname or alias.name)

    def visit_FunctionDef(self, node: ast.FunctionDef) -> None:
        for decorator in node.decorator_list:
            self.visit(decorator)
        self._bind(node.name)  # body is a nested scope, skip it

    visit_AsyncFunctionDef = visit_FunctionDef  # type: ignore[assignment]

    def visit_ClassDef(self, node: ast.ClassDef) -> None:
        for decorator in node.decorator_list:
            self.visit(decorator)
        for base in node.bases:
            self.visit(base)
        self._bind(node.name)

    def visit_Lambda(self, node: ast.Lambda) -> None:
        pass  # nested scope

    def _visit_comprehension(self, node) -> None:
        # comprehension variables do not leak; read the iterables only
        for gen in node.generators:
            self.visit(gen.iter)

    visit_ListComp = _visit_comprehension
    visit_SetComp = _visit_comprehension
    visit_DictComp = _visit_comprehension
    visit_GeneratorExp = _visit_comprehension

    def visit_Global(self, node: ast.Global) -> None:
        pass

    def visit_withitem(self, node: ast.withitem) -> None:
        self.visit(node.context_expr)
        if node.optional_vars is not None:
            self.visit(node.optional_vars)


def analyze_cell_names(source: str) -> NameAnalysis:
    """Names bound at top level and free names read before local (re)binding.

    Unparseable source yields empty sets with the error recorded; the cell
    still participates in the flow.
    """
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        return NameAnalysis(frozenset(), frozenset(), error=f"syntax error: {exc.msg} (line {exc.lineno})")
    visitor = _ScopeVisitor()
    for stmt in tree.body:
        visitor.visit(stmt)
    return NameAnalysis(frozenset(visitor.defined), frozenset(visitor.referenced))


def file_path_literals(source: str) -> list[str]:
    """String constants that look like data file paths, in source order."""
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return []
    found: list[str] = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Constant) and isinstance(node.value, str):
            text = node.value
            if (
                text
                and _FILE_LITERAL_RE.match(text)
                and text.lower().endswith(DATA_FILE_EXTENSIONS)
                and text not in found
            ):
                found.append(text)
    return found


def first_comment_line(source: str) -> str | None:
    for line in source.splitlines():
        stripped = line.strip()
        if stripped.startswith("#"):
            text = stripped.lstrip("#").strip()
            if text:
                return text
        elif stripped:
            return None
    return None


def default_description(source: str, cell_index: int) -> str:
    return first_comment_line(source) or f"Cell {cell_index}"


def build_logic_flow(notebook: Notebook, descriptions: Mapping[int, str] | None = None) -> LogicFlow:
    """One visible node per code cell plus forward def-use edges.

    inputs = free names read before any in-cell binding, plus file-path
    literals; outputs = names bound in the cell. Edge (i, j, name) exists iff
    cell j references name whose most recent earlier definition is cell i.
    """
    descriptions = descriptions or {}
    nodes: list[FlowNode] = []
    edges: list[Edge] = []
    last_definer: dict[str, int] = {}

    for cell in code_cells(notebook):
        analysis = analyze_cell_names(cell.source)
        referenced = sorted(analysis.referenced)
        for name in referenced:
            if name in last_definer:
                edges.append(Edge(producer=last_definer[name], consumer=cell.index, name=name))
        inputs = tuple(referenced) + tuple(file_path_literals(cell.source))
        outputs = tuple(sorted(analysis.defined))
        for name in outputs:
            last_definer[name] = cell.index
        nodes.append(FlowNode(
            id=cell.index,
            description=descriptions.get(cell.index) or default_description(cell.source, cell.index),
            inputs=inputs,
            outputs=outputs,
            diagnostic=analysis.error,
        ))

    return LogicFlow(nodes=tuple(nodes), edges=tuple(edges))


def _replace_node(flow: LogicFlow, node_id: int, **changes) -> LogicFlow:
    found = False
    nodes = []
    for node in flow.nodes:
        if node.id == node_id:
            nodes.append(replace(node, **changes))
            found = True
        else:
            nodes.append(node)
    if not found:
        raise UnknownNode(f"no flow node with id {node_id}")
    return LogicFlow(nodes=tuple(nodes), edges=flow.edges)


def split_node(flow: LogicFlow, node_id: int, line_boundaries: Iterable[int],
               source: str) -> LogicFlow:
    """Split a node's cell into contiguous child segments at the given line
    boundaries. Re-splitting replaces any previous children wholesale.
    """
    parent = flow.node(node_id)
    line_count = len(source.splitlines())
    boundaries = list(line_boundaries)
    if any(b <= 0 or b >= line_count for b in boundaries):
        raise InvalidBoundary(f"boundaries must lie strictly inside (0, {line_count})")
    if any(b2 <= b1 for b1, b2 in zip(boundaries, boundaries[1:])):
        raise InvalidBoundary("boundaries must be strictly increasing")

    lines = source.splitlines()
    children = []
    cuts = [0] + boundaries + [line_count]
    for start, end in zip(cuts, cuts[1:]):
        segment = "\n".join(lines[start:end])
        children.append(FlowNode(
            id=parent.id,
            description=first_comment_line(segment) or f"Lines {start + 1}-{end}",
            inputs=(),
            outputs=(),
            line_range=(start, end),
        ))
    return _replace_node(flow, node_id, children=tuple(children))


def set_hidden(flow: LogicFlow, node_id: int, hidden: bool) -> LogicFlow:
    """Mark a node hidden. Hidden nodes drop out of scene sequencing but stay
    in the flow; edges are untouched.
    """
    return _replace_node(flow, node_id, hidden=hidden)


def flow_to_json(flow: LogicFlow) -> list[dict]:
    """Serialize as an ordered list of node objects. Each node carries the
    {id, description, inputs, outputs} shape extended with hidden, children
    and its incoming edges.
    """
    result = []
    for node in flow.nodes:
        entry = {
            "id": node.id,
            "description": node.description,
            "inputs": list(node.inputs),
            "outputs": list(node.outputs),
            "hidden": node.hidden,
            "children": [
                {
                    "description": child.description,
                    "line_range": list(child.line_range or ()),
                }
                for child in node.children
            ],
            "edges": [
                {"producer": edge.producer, "name": edge.name}
                for edge in flow.edges
                if edge.consumer == node.id
            ],
        }
        if node.diagnostic:
            entry["diagnostic"] = node.diagnostic
        if node.llm_inputs is not None:
            entry["llm_inputs"] = list(node.llm_inputs)
        if node.llm_outputs is not None:
            entry["llm_outputs"] = list(node.llm_outputs)
        result.append(entry)
    return result


def flow_from_json(payload: list[dict]) -> LogicFlow:
    nodes = []
    edges = []
    for entry in payload:
        children = tuple(
            FlowNode(
                id=entry["id"],
                description=child["description"],
                inputs=(),
                outputs=(),
                line_range=tuple(child["line_range"]) if child.get("line_range") else None,
            )
            for child in entry.get("children", [])
        )
        nodes.append(FlowNode(
            id=entry["id"],
            description=entry["description"],
            inputs=tuple(entry.get("inputs", ())),
            outputs=tuple(entry.get("outputs", ())),
            hidden=entry.get("hidden", False),
            children=children,
            diagnostic=entry.get("diagnostic"),
            llm_inputs=tuple(entry["llm_inputs"]) if "llm_inputs" in entry else None,
            llm_outputs=tuple(entry["llm_outputs"]) if "llm_outputs" in entry else None,
        ))
        for edge in entry.get("edges", []):
            edges.append(Edge(producer=edge["producer"], consumer=entry["id"], name=edge["name"]))
    return LogicFlow(nodes=tuple(nodes), edges=tuple(edges))


def apply_flow_descriptions(flow: LogicFlow, entries: list[dict]) -> LogicFlow:
    """Attach generated descriptions to matching nodes.

    Reported inputs/outputs are stored as advisory metadata only; the
    deterministic sets and edges stay canonical.
    """
    by_id = {entry["id"]: entry for entry in entries}
    nodes = []
    for node in flow.nodes:
        entry = by_id.get(node.id)
        if entry is None:
            nodes.append(node)
            continue
        nodes.append(replace(
            node,
            description=str(entry["description"]) or node.description,
            llm_inputs=tuple(str(x) for x in entry.get("inputs", ())),
            llm_outputs=tuple(str(x) for x in entry.get("outputs", ())),
        ))
    return LogicFlow(nodes=tuple(nodes), edges=flow.edges)
