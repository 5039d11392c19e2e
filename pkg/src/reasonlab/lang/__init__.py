"""Subject language: parser, value model and reference interpreter."""

from .interp import (
    DEFAULT_BUDGET,
    BudgetExceeded,
    EvalOutcome,
    Interpreter,
    SubjectRuntimeError,
    Tracer,
    apply_effect,
    eval_expr,
    run_program,
    run_traced,
)
from .nodes import AstUnit, FunctionDef, Span
from .parser import SubjectSyntaxError, parse
from .render import render_expr, render_unit
from .values import (
    ErrorMarker,
    LiteralError,
    outputs_equal,
    parse_literal,
    render_value,
)

__all__ = [
    "DEFAULT_BUDGET",
    "AstUnit",
    "BudgetExceeded",
    "ErrorMarker",
    "EvalOutcome",
    "FunctionDef",
    "Interpreter",
    "LiteralError",
    "Span",
    "SubjectRuntimeError",
    "SubjectSyntaxError",
    "Tracer",
    "apply_effect",
    "eval_expr",
    "outputs_equal",
    "parse",
    "parse_literal",
    "render_expr",
    "render_unit",
    "render_value",
    "run_program",
    "run_traced",
]
