"""Statement-level control-flow graphs with stable node ids, path queries and DOT export."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .lang import nodes as n
from .lang.render import render_expr, render_stmt

NODE_KINDS = ("entry", "exit", "statement", "branch", "loop_head", "return")
EDGE_KINDS = ("seq", "true", "false", "loop_back", "loop_exit")
DECISION_NODES = ("branch", "loop_head")
# Nodes a trace step may never silently pass through.
BARRIER_NODES = ("branch", "loop_head", "return")

_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


@dataclass(frozen=True)
class CfgNode:
    id: str
    kind: str
    span: n.Span
    label: str
    ordinal: int
    scope: Optional[n.Span] = None  # whole compound statement (branch / loop_head)
    true_span: Optional[n.Span] = None
    false_span: Optional[n.Span] = None
    stmt: Optional[n.Stmt] = field(default=None, compare=False, repr=False)

    @property
    def line(self) -> int:
        return self.span.start


@dataclass(frozen=True)
class CfgEdge:
    src: str
    dst: str
    kind: str


@dataclass(frozen=True)
class Cfg:
    function: str
    params: tuple[str, ...]
    nodes: Mapping[str, CfgNode]
    edges: tuple[CfgEdge, ...]
    entry: str
    exit: str
    dead_spans: tuple[n.Span, ...] = ()
    node_by_ordinal: Mapping[int, str] = field(default_factory=dict, compare=False, repr=False)
    _out: Mapping[str, tuple[CfgEdge, ...]] = field(default_factory=dict, compare=False, repr=False)

    def successors(self, node_id: str) -> tuple[CfgEdge, ...]:
        return self._out.get(node_id, ())

    def edge(self, node_id: str, kind: str) -> Optional[CfgEdge]:
        for e in self.successors(node_id):
            if e.kind == kind:
                return e
        return None

    def decision_edge(self, node_id: str, decision: bool) -> Optional[CfgEdge]:
        if decision:
            return self.edge(node_id, "true")
        return self.edge(node_id, "false") or self.edge(node_id, "loop_exit")

    def node_for(self, stmt: n.Stmt, ordinals: Mapping[int, int]) -> CfgNode:
        return self.nodes[self.node_by_ordinal[ordinals[id(stmt)]]]

    def ordered(self) -> list[CfgNode]:
        return sorted(self.nodes.values(), key=lambda nd: nd.ordinal)


def _block_span(body: tuple[n.Stmt, ...]) -> Optional[n.Span]:
    if not body:
        return None
    return n.Span(body[0].span.start, body[-1].span.end)


class _Builder:
    def __init__(self, fn: n.FunctionDef, text: str):
        self.fn = fn
        self.lines = text.splitlines() if text else []
        self.ordinals = n.statement_ordinals(fn)
        self.nodes: dict[str, CfgNode] = {}
        self.edges: list[CfgEdge] = []
        self.by_ordinal: dict[int, str] = {}

    def _excerpt(self, span: n.Span, fallback: str) -> str:
        if self.lines and 0 < span.start <= span.end <= len(self.lines):
            return " ".join(ln.strip() for ln in self.lines[span.start - 1 : span.end])
        return fallback

    def node(self, kind: str, span: n.Span, ordinal: int, label: str, stmt: Optional[n.Stmt] = None, **extra) -> str:
        salt = 0
        while True:
            key = f"{self.fn.name}|{kind}|{span.start}-{span.end}|{ordinal}"
            if salt:
                key += f"#{salt}"
            node_id = f"{fnv1a64(key.encode()):016x}"[:8]
            if node_id not in self.nodes:
                break
            salt += 1
        self.nodes[node_id] = CfgNode(node_id, kind, span, label, ordinal, stmt=stmt, **extra)
        if stmt is not None:
            self.by_ordinal[ordinal] = node_id
        return node_id

    def link(self, src: str, dst: str, kind: str) -> None:
        self.edges.append(CfgEdge(src, dst, kind))

    # A target is (node id, kind of an edge arriving from a plain statement).
    def block(self, body: tuple[n.Stmt, ...], target: tuple[str, str], loop: Optional[tuple[str, str]]) -> tuple[str, str]:
        for stmt in reversed(body):
            target = self.stmt(stmt, target, loop)
        return target

    def stmt(self, s: n.Stmt, target: tuple[str, str], loop: Optional[tuple[str, str]]) -> tuple[str, str]:
        ordinal = self.ordinals[id(s)]
        if isinstance(s, n.If):
            label = self._excerpt(s.test.span, render_expr(s.test))
            node_id = self.node(
                "branch", s.test.span, ordinal, label, s,
                scope=s.span, true_span=_block_span(s.body), false_span=_block_span(s.orelse),
            )
            t = self.block(s.body, target, loop)
            f = self.block(s.orelse, target, loop) if s.orelse else target
            self.link(node_id, t[0], "true")
            self.link(node_id, f[0], "false")
            return node_id, "seq"
        if isinstance(s, (n.While, n.For)):
            span = s.test.span if isinstance(s, n.While) else s.header
            fallback = render_stmt(s, 0)[0].rstrip(":")
            node_id = self.node(
                "loop_head", span, ordinal, self._excerpt(span, fallback), s,
                scope=s.span, true_span=_block_span(s.body),
            )
            first = self.block(s.body, (node_id, "loop_back"), (node_id, target[0]))
            self.link(node_id, first[0], "true")
            self.link(node_id, target[0], "loop_exit")
            return node_id, "seq"
        label = self._excerpt(s.span, render_stmt(s, 0)[0])
        if isinstance(s, n.Return):
            node_id = self.node("return", s.span, ordinal, label, s)
            self.link(node_id, self.exit_id, "seq")
            return node_id, "seq"
        node_id = self.node("statement", s.span, ordinal, label, s)
        if isinstance(s, n.Break):
            assert loop is not None
            self.link(node_id, loop[1], "loop_exit")
        elif isinstance(s, n.Continue):
            assert loop is not None
            self.link(node_id, loop[0], "loop_back")
        else:
            self.link(node_id, target[0], target[1])
        return node_id, "seq"

    def build(self) -> Cfg:
        fn = self.fn
        count = len(self.ordinals)
        end_line = fn.span.end if fn.span.end else 0
        self.entry_id = self.node("entry", n.Span(fn.span.start, fn.span.start), -1, f"{fn.name}({', '.join(fn.params)})")
        self.exit_id = self.node("exit", n.Span(end_line, end_line), count, "exit")
        first = self.block(fn.body, (self.exit_id, "seq"), None)
        self.link(self.entry_id, first[0], "seq")

        out: dict[str, list[CfgEdge]] = {}
        for e in self.edges:
            out.setdefault(e.src, []).append(e)
        reached = {self.entry_id}
        queue = deque([self.entry_id])
        while queue:
            cur = queue.popleft()
            for e in out.get(cur, ()):
                if e.dst not in reached:
                    reached.add(e.dst)
                    queue.append(e.dst)
        reached.add(self.exit_id)
        dead = tuple(sorted(nd.span for nid, nd in self.nodes.items() if nid not in reached))
        nodes = {nid: nd for nid, nd in sorted(self.nodes.items(), key=lambda kv: kv[1].ordinal) if nid in reached}
        edges = tuple(e for e in self.edges if e.src in reached)
        order = {nid: i for i, nid in enumerate(nodes)}
        edges = tuple(sorted(edges, key=lambda e: (order[e.src], EDGE_KINDS.index(e.kind))))
        out_final: dict[str, tuple[CfgEdge, ...]] = {}
        for e in edges:
            out_final[e.src] = out_final.get(e.src, ()) + (e,)
        by_ordinal = {o: nid for o, nid in self.by_ordinal.items() if nid in reached}
        return Cfg(fn.name, fn.params, nodes, edges, self.entry_id, self.exit_id, dead, by_ordinal, out_final)


def build_cfg(program: n.AstUnit, function: str) -> Cfg:
    """Build the control-flow graph of ``function``; statements after a jump are dropped as dead."""
    return _Builder(program.function(function), program.text).build()


def _candidates(cfg: Cfg, line: int) -> list[CfgNode]:
    found = [nd for nd in cfg.nodes.values() if nd.kind not in ("entry", "exit") and nd.span.covers(line)]
    return sorted(found, key=lambda nd: (nd.span.size, nd.ordinal))


def locate_node(cfg: Cfg, line: int) -> Optional[str]:
    """Node whose span contains ``line`` (smallest span, then earliest ordinal); ``None`` if none."""
    found = _candidates(cfg, line)
    return found[0].id if found else None


def resolve_line(cfg: Cfg, line: int, prev: Optional[str] = None, decision: Optional[bool] = None) -> Optional[str]:
    """Like :func:`locate_node`, but prefer a candidate reachable from ``prev``.

    Needed when several statements share a source line (``if x: return 1``).
    """
    found = _candidates(cfg, line)
    if not found:
        return None
    if prev is not None and prev in cfg.nodes:
        for nd in found:
            if is_step_feasible(cfg, prev, nd.id, decision):
                return nd.id
    return found[0].id


def is_step_feasible(cfg: Cfg, src: str, dst: str, decision: Optional[bool] = None) -> bool:
    """True iff some path src -> dst has no branch, loop head or return strictly inside it.

    With ``decision`` given and ``src`` a decision node, the path must leave
    ``src`` through the matching edge.
    """
    first: Iterable[CfgEdge] = cfg.successors(src)
    if decision is not None and cfg.nodes[src].kind in DECISION_NODES:
        edge = cfg.decision_edge(src, decision)
        first = (edge,) if edge else ()
    seen: set[str] = set()
    queue = deque(e.dst for e in first)
    while queue:
        cur = queue.popleft()
        if cur == dst:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        node = cfg.nodes[cur]
        if node.kind in BARRIER_NODES or node.kind == "exit":
            continue
        queue.extend(e.dst for e in cfg.successors(cur))
    return False


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


_SHAPES = {"entry": "oval", "exit": "oval", "branch": "diamond", "loop_head": "hexagon", "return": "box", "statement": "box"}


def to_dot(cfg: Cfg) -> str:
    out = [f'digraph "{_dot_escape(cfg.function)}" {{', '  node [fontname="monospace"];']
    for nd in cfg.nodes.values():
        label = f"{nd.id}\\n{_dot_escape(nd.label)}"
        out.append(f'  "{nd.id}" [label="{label}", shape={_SHAPES[nd.kind]}];')
    for e in cfg.edges:
        out.append(f'  "{e.src}" -> "{e.dst}" [label="{e.kind}"];')
    out.append("}")
    return "\n".join(out) + "\n"
