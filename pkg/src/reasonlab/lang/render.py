"""Render syntax trees back to subject-language source."""

from __future__ import annotations

from . import nodes as n
from .values import render_value

INDENT = "    "

_BIN_PREC = {"+": 6, "-": 6, "*": 7, "/": 7, "//": 7, "%": 7, "**": 9}
_ATOM = 10


def _prec(e: n.Expr) -> int:
    if isinstance(e, n.BoolOp):
        return 1 if e.op == "or" else 2
    if isinstance(e, n.UnaryOp):
        return 3 if e.op == "not" else 8
    if isinstance(e, n.Compare):
        return 4
    if isinstance(e, n.BinOp):
        return _BIN_PREC[e.op]
    if isinstance(e, n.Const) and isinstance(e.value, (int, float)) and not isinstance(e.value, bool):
        if e.value < 0 or str(e.value).startswith("-"):
            return 8
    return _ATOM


def _wrap(e: n.Expr, parens: bool) -> str:
    s = render_expr(e)
    return f"({s})" if parens else s


def render_expr(e: n.Expr) -> str:
    if isinstance(e, n.Const):
        if isinstance(e.value, float) and (e.value != e.value or e.value in (float("inf"), float("-inf"))):
            return f"float({render_value(e.value)!r})"
        return render_value(e.value)
    if isinstance(e, n.Name):
        return e.id
    if isinstance(e, n.BinOp):
        p = _BIN_PREC[e.op]
        if e.op == "**":
            left = _wrap(e.left, _prec(e.left) <= p)
            right = _wrap(e.right, _prec(e.right) < 8)
        else:
            left = _wrap(e.left, _prec(e.left) < p)
            right = _wrap(e.right, _prec(e.right) <= p)
        return f"{left} {e.op} {right}"
    if isinstance(e, n.UnaryOp):
        if e.op == "not":
            return "not " + _wrap(e.operand, _prec(e.operand) < _ATOM)
        return "-" + _wrap(e.operand, _prec(e.operand) < 8)
    if isinstance(e, n.BoolOp):
        p = _prec(e)
        return f" {e.op} ".join(_wrap(v, _prec(v) <= p) for v in e.values)
    if isinstance(e, n.Compare):
        return f"{_wrap(e.left, _prec(e.left) <= 4)} {e.op} {_wrap(e.right, _prec(e.right) <= 4)}"
    if isinstance(e, n.Index):
        return f"{_wrap(e.value, _prec(e.value) < _ATOM)}[{render_expr(e.index)}]"
    if isinstance(e, n.Slice):
        parts = [render_expr(x) if x is not None else "" for x in (e.lower, e.upper)]
        inner = ":".join(parts)
        if e.step is not None:
            inner += ":" + render_expr(e.step)
        return f"{_wrap(e.value, _prec(e.value) < _ATOM)}[{inner}]"
    if isinstance(e, n.ListExpr):
        return "[" + ", ".join(render_expr(x) for x in e.elts) + "]"
    if isinstance(e, n.ListComp):
        s = f"[{render_expr(e.elt)} for {e.target} in {_wrap(e.iter, _prec(e.iter) <= 2)}"
        if e.cond is not None:
            s += f" if {_wrap(e.cond, _prec(e.cond) <= 2)}"
        return s + "]"
    if isinstance(e, n.Call):
        return f"{e.func}(" + ", ".join(render_expr(a) for a in e.args) + ")"
    if isinstance(e, n.MethodCall):
        obj = _wrap(e.obj, _prec(e.obj) < _ATOM)
        return f"{obj}.{e.method}(" + ", ".join(render_expr(a) for a in e.args) + ")"
    raise TypeError(f"cannot render {e!r}")


def render_block(body: tuple[n.Stmt, ...], depth: int) -> list[str]:
    lines: list[str] = []
    for stmt in body:
        lines.extend(render_stmt(stmt, depth))
    return lines


def render_stmt(s: n.Stmt, depth: int, keyword: str = "if") -> list[str]:
    pad = INDENT * depth
    if isinstance(s, n.Assign):
        return [f"{pad}{render_expr(s.target)} = {render_expr(s.value)}"]
    if isinstance(s, n.AugAssign):
        return [f"{pad}{render_expr(s.target)} {s.op}= {render_expr(s.value)}"]
    if isinstance(s, n.If):
        out = [f"{pad}{keyword} {render_expr(s.test)}:"] + render_block(s.body, depth + 1)
        if s.orelse:
            if len(s.orelse) == 1 and isinstance(s.orelse[0], n.If) and s.orelse[0].is_elif:
                out += render_stmt(s.orelse[0], depth, "elif")
            else:
                out += [f"{pad}else:"] + render_block(s.orelse, depth + 1)
        return out
    if isinstance(s, n.While):
        return [f"{pad}while {render_expr(s.test)}:"] + render_block(s.body, depth + 1)
    if isinstance(s, n.For):
        return [f"{pad}for {s.target} in {render_expr(s.iter)}:"] + render_block(s.body, depth + 1)
    if isinstance(s, n.Break):
        return [f"{pad}break"]
    if isinstance(s, n.Continue):
        return [f"{pad}continue"]
    if isinstance(s, n.Pass):
        return [f"{pad}pass"]
    if isinstance(s, n.Return):
        return [f"{pad}return" + ("" if s.value is None else f" {render_expr(s.value)}")]
    if isinstance(s, n.ExprStmt):
        return [f"{pad}{render_expr(s.value)}"]
    raise TypeError(f"cannot render {s!r}")


def render_function(fn: n.FunctionDef) -> str:
    lines = [f"def {fn.name}({', '.join(fn.params)}):"] + render_block(fn.body, 1)
    return "\n".join(lines)


def render_unit(unit: n.AstUnit) -> str:
    return "\n\n\n".join(render_function(fn) for fn in unit.functions) + "\n"
