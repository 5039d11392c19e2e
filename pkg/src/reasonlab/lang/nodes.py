"""Syntax tree of the subject language.

Nodes are frozen dataclasses.  Every node carries a ``span`` (1-based, inclusive
line range) that is excluded from equality, so a tree re-parsed from its own
rendering compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Optional, Union


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def covers(self, line: int) -> bool:
        return self.start <= line <= self.end

    @property
    def size(self) -> int:
        return self.end - self.start

    def __str__(self) -> str:
        return f"{self.start}" if self.start == self.end else f"{self.start}-{self.end}"


NOSPAN = Span(0, 0)


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: Any
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Name:
    id: str
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * / // % **
    left: "Expr"
    right: "Expr"
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class UnaryOp:
    op: str  # - or not
    operand: "Expr"
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class BoolOp:
    op: str  # and / or
    values: tuple["Expr", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Compare:
    op: str  # == != < <= > >=
    left: "Expr"
    right: "Expr"
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Index:
    value: "Expr"
    index: "Expr"
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Slice:
    value: "Expr"
    lower: Optional["Expr"]
    upper: Optional["Expr"]
    step: Optional["Expr"]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class ListExpr:
    elts: tuple["Expr", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class ListComp:
    elt: "Expr"
    target: str
    iter: "Expr"
    cond: Optional["Expr"]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class MethodCall:
    obj: "Expr"
    method: str
    args: tuple["Expr", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


Expr = Union[Const, Name, BinOp, UnaryOp, BoolOp, Compare, Index, Slice, ListExpr, ListComp, Call, MethodCall]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    target: Union[Name, Index]
    value: Expr
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class AugAssign:
    target: Union[Name, Index]
    op: str  # + - * //
    value: Expr
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class If:
    test: Expr
    body: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] = ()
    is_elif: bool = field(default=False, compare=False)
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class While:
    test: Expr
    body: tuple["Stmt", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class For:
    target: str
    iter: Expr
    body: tuple["Stmt", ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)
    header: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Break:
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Continue:
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Pass:
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Return:
    value: Optional[Expr]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class ExprStmt:
    value: Expr
    span: Span = field(default=NOSPAN, compare=False, repr=False)


Stmt = Union[Assign, AugAssign, If, While, For, Break, Continue, Pass, Return, ExprStmt]
SIMPLE_STATEMENTS = (Assign, AugAssign, Break, Continue, Pass, ExprStmt)


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    body: tuple[Stmt, ...]
    span: Span = field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class AstUnit:
    functions: tuple[FunctionDef, ...]
    text: str = field(default="", compare=False, repr=False)

    def function(self, name: str) -> FunctionDef:
        for fn in self.functions:
            if fn.name == name:
                return fn
        raise KeyError(f"no function named {name!r}")

    def has_function(self, name: str) -> bool:
        return any(fn.name == name for fn in self.functions)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(fn.name for fn in self.functions)


# -- traversal helpers -------------------------------------------------------


def child_blocks(stmt: Stmt) -> tuple[tuple[Stmt, ...], ...]:
    if isinstance(stmt, If):
        return (stmt.body, stmt.orelse)
    if isinstance(stmt, (While, For)):
        return (stmt.body,)
    return ()


def walk_statements(body: tuple[Stmt, ...]) -> Iterator[Stmt]:
    """Pre-order walk; the order defines statement ordinals."""
    for stmt in body:
        yield stmt
        for block in child_blocks(stmt):
            yield from walk_statements(block)


def statement_ordinals(fn: FunctionDef) -> dict[int, int]:
    """Map ``id(stmt)`` to its pre-order ordinal inside ``fn``."""
    return {id(s): i for i, s in enumerate(walk_statements(fn.body))}


def walk_expr(expr: Optional[Expr]) -> Iterator[Expr]:
    if expr is None:
        return
    yield expr
    if isinstance(expr, BinOp):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, UnaryOp):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, BoolOp):
        for v in expr.values:
            yield from walk_expr(v)
    elif isinstance(expr, Compare):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, Index):
        yield from walk_expr(expr.value)
        yield from walk_expr(expr.index)
    elif isinstance(expr, Slice):
        for part in (expr.value, expr.lower, expr.upper, expr.step):
            yield from walk_expr(part)
    elif isinstance(expr, ListExpr):
        for e in expr.elts:
            yield from walk_expr(e)
    elif isinstance(expr, ListComp):
        yield from walk_expr(expr.iter)
        yield from walk_expr(expr.elt)
        yield from walk_expr(expr.cond)
    elif isinstance(expr, (Call, MethodCall)):
        if isinstance(expr, MethodCall):
            yield from walk_expr(expr.obj)
        for a in expr.args:
            yield from walk_expr(a)


def names_read(expr: Optional[Expr]) -> set[str]:
    return {e.id for e in walk_expr(expr) if isinstance(e, Name)}


def statement_exprs(stmt: Stmt) -> list[Expr]:
    if isinstance(stmt, (Assign, AugAssign)):
        return [stmt.target, stmt.value]
    if isinstance(stmt, (If, While)):
        return [stmt.test]
    if isinstance(stmt, For):
        return [stmt.iter]
    if isinstance(stmt, Return):
        return [stmt.value] if stmt.value is not None else []
    if isinstance(stmt, ExprStmt):
        return [stmt.value]
    return []


def base_name(expr: Expr) -> Optional[str]:
    """The variable ultimately written by a store or in-place method call."""
    while isinstance(expr, (Index, Slice)):
        expr = expr.value
    return expr.id if isinstance(expr, Name) else None


def written_names(stmt: Stmt) -> set[str]:
    if isinstance(stmt, (Assign, AugAssign)):
        name = base_name(stmt.target)
        return {name} if name else set()
    if isinstance(stmt, For):
        return {stmt.target}
    if isinstance(stmt, ExprStmt):
        return {
            n
            for e in walk_expr(stmt.value)
            if isinstance(e, MethodCall) and (n := base_name(e.obj))
        }
    return set()


def local_names(fn: FunctionDef) -> list[str]:
    """Parameters and every name bound in the function, in first-binding order."""
    seen: dict[str, None] = dict.fromkeys(fn.params)
    for stmt in walk_statements(fn.body):
        if isinstance(stmt, (Assign, AugAssign)) and isinstance(stmt.target, Name):
            seen.setdefault(stmt.target.id)
        elif isinstance(stmt, For):
            seen.setdefault(stmt.target)
        for expr in statement_exprs(stmt):
            for e in walk_expr(expr):
                if isinstance(e, ListComp):
                    seen.setdefault(e.target)
    return list(seen)
