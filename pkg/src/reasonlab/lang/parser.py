"""Parse subject-language source into :class:`AstUnit`.

Concrete syntax is a strict subset of Python, so tokenizing and grammar work is
delegated to the standard :mod:`ast` module; this module only admits the subset
and converts it into the frozen node types.
"""

from __future__ import annotations

import ast as py
from typing import Optional

from . import nodes as n
from .values import INT_MAX, INT_MIN

BIN_OPS = {
    py.Add: "+",
    py.Sub: "-",
    py.Mult: "*",
    py.Div: "/",
    py.FloorDiv: "//",
    py.Mod: "%",
    py.Pow: "**",
}
AUG_OPS = {py.Add: "+", py.Sub: "-", py.Mult: "*", py.FloorDiv: "//"}
CMP_OPS = {py.Eq: "==", py.NotEq: "!=", py.Lt: "<", py.LtE: "<=", py.Gt: ">", py.GtE: ">="}


class SubjectSyntaxError(Exception):
    """Source text is not a program of the subject language.

    ``kind`` is ``"syntax"`` for malformed text and ``"subset"`` for well-formed
    Python that uses a construct outside the subset.
    """

    def __init__(self, message: str, line: int, column: int = 0, kind: str = "syntax"):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.kind = kind


def parse(text: str) -> n.AstUnit:
    try:
        tree = py.parse(text)
    except SyntaxError as exc:
        raise SubjectSyntaxError(exc.msg, exc.lineno or 1, exc.offset or 0, "syntax") from None
    except ValueError as exc:  # e.g. null bytes
        raise SubjectSyntaxError(str(exc), 1, 0, "syntax") from None
    return _Converter(text).module(tree)


def _span(node: py.AST) -> n.Span:
    return n.Span(node.lineno, node.end_lineno or node.lineno)


def _reject(node: py.AST, what: str) -> SubjectSyntaxError:
    return SubjectSyntaxError(
        f"{what} is outside the supported subset",
        getattr(node, "lineno", 1),
        getattr(node, "col_offset", 0) + 1,
        "subset",
    )


class _Converter:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.text = text
        self.loop_depth = 0

    def module(self, tree: py.Module) -> n.AstUnit:
        functions: list[n.FunctionDef] = []
        for i, stmt in enumerate(tree.body):
            if isinstance(stmt, py.FunctionDef):
                fn = self.function(stmt)
                if any(f.name == fn.name for f in functions):
                    raise _reject(stmt, f"redefinition of {fn.name!r}")
                functions.append(fn)
            elif i == 0 and _is_docstring(stmt):
                continue
            else:
                raise _reject(stmt, f"top-level {type(stmt).__name__}")
        if not functions:
            raise SubjectSyntaxError("no function definitions", 1, 0, "subset")
        return n.AstUnit(tuple(functions), self.text)

    def function(self, node: py.FunctionDef) -> n.FunctionDef:
        a = node.args
        if node.decorator_list:
            raise _reject(node, "decorator")
        if a.vararg or a.kwarg or a.kwonlyargs or a.posonlyargs or a.defaults or a.kw_defaults:
            raise _reject(node, "non-positional or defaulted parameter")
        params = tuple(arg.arg for arg in a.args)
        self.loop_depth = 0
        if len(set(params)) != len(params):
            raise _reject(node, "duplicate parameter")
        body = self.block(node.body)
        return n.FunctionDef(node.name, params, body, _span(node))

    def block(self, stmts: list[py.stmt]) -> tuple[n.Stmt, ...]:
        return tuple(self.stmt(s) for s in stmts)

    def loop_body(self, stmts: list[py.stmt]) -> tuple[n.Stmt, ...]:
        self.loop_depth += 1
        try:
            return self.block(stmts)
        finally:
            self.loop_depth -= 1

    def stmt(self, s: py.stmt) -> n.Stmt:
        sp = _span(s)
        if isinstance(s, py.Assign):
            if len(s.targets) != 1:
                raise _reject(s, "chained assignment")
            return n.Assign(self.store(s.targets[0]), self.expr(s.value), sp)
        if isinstance(s, py.AnnAssign):
            if s.value is None or not s.simple:
                raise _reject(s, "bare annotation")
            return n.Assign(self.store(s.target), self.expr(s.value), sp)
        if isinstance(s, py.AugAssign):
            op = AUG_OPS.get(type(s.op))
            if op is None:
                raise _reject(s, f"augmented operator {type(s.op).__name__}")
            return n.AugAssign(self.store(s.target), op, self.expr(s.value), sp)
        if isinstance(s, py.If):
            is_elif = False
            line = self.lines[s.lineno - 1] if s.lineno - 1 < len(self.lines) else ""
            if line[s.col_offset :].startswith("elif"):
                is_elif = True
            return n.If(self.expr(s.test), self.block(s.body), self.block(s.orelse), is_elif, sp)
        if isinstance(s, py.While):
            if s.orelse:
                raise _reject(s, "while-else")
            return n.While(self.expr(s.test), self.loop_body(s.body), sp)
        if isinstance(s, py.For):
            if s.orelse:
                raise _reject(s, "for-else")
            if not isinstance(s.target, py.Name):
                raise _reject(s.target, "non-name loop target")
            header = n.Span(s.lineno, s.iter.end_lineno or s.lineno)
            return n.For(s.target.id, self.expr(s.iter), self.loop_body(s.body), sp, header)
        if isinstance(s, (py.Break, py.Continue)):
            if not self.loop_depth:
                raise SubjectSyntaxError(
                    f"'{type(s).__name__.lower()}' outside loop", s.lineno, s.col_offset + 1, "syntax"
                )
            return n.Break(sp) if isinstance(s, py.Break) else n.Continue(sp)
        if isinstance(s, py.Pass):
            return n.Pass(sp)
        if isinstance(s, py.Return):
            return n.Return(self.expr(s.value) if s.value is not None else None, sp)
        if isinstance(s, py.Expr):
            return n.ExprStmt(self.expr(s.value), sp)
        if isinstance(s, (py.FunctionDef, py.AsyncFunctionDef, py.ClassDef)):
            raise _reject(s, "nested definition")
        raise _reject(s, type(s).__name__)

    def store(self, t: py.expr) -> n.Name | n.Index:
        if isinstance(t, py.Name):
            return n.Name(t.id, _span(t))
        if isinstance(t, py.Subscript) and not isinstance(t.slice, py.Slice):
            return n.Index(self.expr(t.value), self.expr(t.slice), _span(t))
        raise _reject(t, "assignment target")

    def opt(self, e: Optional[py.expr]) -> Optional[n.Expr]:
        return None if e is None else self.expr(e)

    def expr(self, e: py.expr) -> n.Expr:
        sp = _span(e)
        if isinstance(e, py.Constant):
            v = e.value
            if v is None or isinstance(v, (bool, int, float, str)):
                if isinstance(v, int) and not isinstance(v, bool) and not INT_MIN <= v <= INT_MAX:
                    raise _reject(e, "integer literal beyond 64 bits")
                return n.Const(v, sp)
            raise _reject(e, f"{type(v).__name__} literal")
        if isinstance(e, py.Name):
            return n.Name(e.id, sp)
        if isinstance(e, py.BinOp):
            op = BIN_OPS.get(type(e.op))
            if op is None:
                raise _reject(e, f"operator {type(e.op).__name__}")
            return n.BinOp(op, self.expr(e.left), self.expr(e.right), sp)
        if isinstance(e, py.UnaryOp):
            if isinstance(e.op, py.USub):
                return n.UnaryOp("-", self.expr(e.operand), sp)
            if isinstance(e.op, py.Not):
                return n.UnaryOp("not", self.expr(e.operand), sp)
            raise _reject(e, f"unary {type(e.op).__name__}")
        if isinstance(e, py.BoolOp):
            op = "and" if isinstance(e.op, py.And) else "or"
            return n.BoolOp(op, tuple(self.expr(v) for v in e.values), sp)
        if isinstance(e, py.Compare):
            if len(e.ops) != 1:
                raise _reject(e, "chained comparison")
            op = CMP_OPS.get(type(e.ops[0]))
            if op is None:
                raise _reject(e, f"comparison {type(e.ops[0]).__name__}")
            return n.Compare(op, self.expr(e.left), self.expr(e.comparators[0]), sp)
        if isinstance(e, py.Subscript):
            if isinstance(e.slice, py.Slice):
                s = e.slice
                return n.Slice(self.expr(e.value), self.opt(s.lower), self.opt(s.upper), self.opt(s.step), sp)
            return n.Index(self.expr(e.value), self.expr(e.slice), sp)
        if isinstance(e, py.List):
            if any(isinstance(x, py.Starred) for x in e.elts):
                raise _reject(e, "starred element")
            return n.ListExpr(tuple(self.expr(x) for x in e.elts), sp)
        if isinstance(e, py.ListComp):
            if len(e.generators) != 1:
                raise _reject(e, "multi-clause comprehension")
            g = e.generators[0]
            if g.is_async or not isinstance(g.target, py.Name) or len(g.ifs) > 1:
                raise _reject(e, "comprehension form")
            cond = self.expr(g.ifs[0]) if g.ifs else None
            return n.ListComp(self.expr(e.elt), g.target.id, self.expr(g.iter), cond, sp)
        if isinstance(e, py.Call):
            if e.keywords or any(isinstance(a, py.Starred) for a in e.args):
                raise _reject(e, "keyword or starred argument")
            args = tuple(self.expr(a) for a in e.args)
            if isinstance(e.func, py.Name):
                return n.Call(e.func.id, args, sp)
            if isinstance(e.func, py.Attribute) and e.func.attr == "append":
                return n.MethodCall(self.expr(e.func.value), "append", args, sp)
            raise _reject(e, "call form")
        raise _reject(e, type(e).__name__)


def _is_docstring(stmt: py.stmt) -> bool:
    return isinstance(stmt, py.Expr) and isinstance(stmt.value, py.Constant) and isinstance(stmt.value.value, str)
