"""Deterministic tree-walking interpreter for the subject language.

The interpreter is the ground truth for the whole laboratory: the benchmark
filter runs solutions with it, the inspector re-evaluates conditions and
assignments with it, and the mock reasoner derives its traces from it.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from . import nodes as n
from .values import INT_MAX, INT_MIN, ErrorMarker, copy_state, copy_value

DEFAULT_BUDGET = 100_000
MAX_CALL_DEPTH = 50

if sys.getrecursionlimit() < 10_000:
    sys.setrecursionlimit(10_000)


class SubjectRuntimeError(Exception):
    def __init__(self, kind: str, message: str, line: int = 0):
        super().__init__(f"{kind}: {message}" + (f" (line {line})" if line else ""))
        self.kind = kind
        self.message = message
        self.line = line

    def marker(self) -> ErrorMarker:
        return ErrorMarker(self.kind, self.message)


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class EvalOutcome:
    status: str  # "returned" | "runtime_error" | "step_budget_exceeded"
    steps_executed: int
    value: Any = None
    error_kind: str = ""
    error_message: str = ""
    error_line: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "returned"

    @property
    def output(self) -> Any:
        """The returned value, or an :class:`ErrorMarker` for failed runs."""
        if self.ok:
            return self.value
        if self.status == "step_budget_exceeded":
            return ErrorMarker("step_budget_exceeded")
        return ErrorMarker(self.error_kind, self.error_message)


class _Return(Exception):
    def __init__(self, value: Any):
        self.value = value


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


@dataclass
class RawStep:
    stmt: n.Stmt
    pre: dict[str, Any]
    post: dict[str, Any]
    decision: Optional[bool] = None
    error: bool = False


class Tracer:
    """Observer of the entry frame.  Subclasses may bend execution (fault models)."""

    def __init__(self) -> None:
        self.steps: list[RawStep] = []
        self.occurrences = 0

    @property
    def next_index(self) -> int:
        return len(self.steps) + 1

    def decide(self, stmt: n.Stmt, value: bool) -> bool:
        self.occurrences += 1
        return value

    def skip(self, index: int, stmt: n.Stmt) -> bool:
        return False

    def adjust(self, index: int, stmt: n.Stmt, env: dict[str, Any]) -> None:
        pass

    def record(self, stmt: n.Stmt, pre: dict, post: dict, decision: Optional[bool] = None, error: bool = False) -> None:
        self.steps.append(RawStep(stmt, pre, post, decision, error))


@dataclass
class _Frame:
    env: dict[str, Any]
    tracer: Optional[Tracer] = None
    line: int = 0


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float))


def _is_int(v: Any) -> bool:
    return isinstance(v, int)


def _check_int(v: Any) -> Any:
    if isinstance(v, int) and not isinstance(v, bool) and not INT_MIN <= v <= INT_MAX:
        raise SubjectRuntimeError("overflow", "integer result exceeds 64 bits")
    return v


def _tname(v: Any) -> str:
    if v is None:
        return "NoneType"
    return type(v).__name__


def _items(v: Any) -> list[Any]:
    if isinstance(v, list):
        return list(v)
    if isinstance(v, str):
        return list(v)
    raise SubjectRuntimeError("type_error", f"'{_tname(v)}' object is not iterable")


class Interpreter:
    def __init__(self, program: n.AstUnit, budget: int = DEFAULT_BUDGET):
        self.program = program
        self.functions = {fn.name: fn for fn in program.functions}
        self.budget = budget
        self.steps = 0
        self.depth = 0
        self._builtins: dict[str, Callable[..., Any]] = {
            "abs": self._abs,
            "len": self._len,
            "min": lambda *a: self._minmax(min, "min", a),
            "max": lambda *a: self._minmax(max, "max", a),
            "sum": self._sum,
            "range": self._range,
            "sorted": self._sorted,
            "str": self._str,
            "int": self._int,
            "float": self._float,
        }

    # -- accounting ------------------------------------------------------

    def tick(self, cost: int = 1) -> None:
        if self.steps + cost > self.budget:
            self.steps = self.budget
            raise BudgetExceeded()
        self.steps += cost

    # -- calls -----------------------------------------------------------

    def call(self, name: str, args: Sequence[Any], tracer: Optional[Tracer] = None) -> Any:
        fn = self.functions.get(name)
        if fn is None:
            raise SubjectRuntimeError("name_error", f"name '{name}' is not defined")
        if len(args) != len(fn.params):
            raise SubjectRuntimeError(
                "type_error", f"{name}() takes {len(fn.params)} arguments but {len(args)} were given"
            )
        if self.depth >= MAX_CALL_DEPTH:
            raise SubjectRuntimeError("recursion", "maximum call depth exceeded")
        frame = _Frame(dict(zip(fn.params, args)), tracer)
        self.depth += 1
        try:
            self._exec_block(fn.body, frame)
        except _Return as ret:
            return ret.value
        except SubjectRuntimeError as err:
            if not err.line:
                err.line = frame.line
            raise
        finally:
            self.depth -= 1
        return None

    # -- statements ------------------------------------------------------

    def _exec_block(self, body: tuple[n.Stmt, ...], fr: _Frame) -> None:
        for stmt in body:
            self._exec(stmt, fr)

    def _snap(self, fr: _Frame) -> dict[str, Any]:
        return copy_state(fr.env)

    def _exec(self, s: n.Stmt, fr: _Frame) -> None:
        fr.line = s.span.start
        tr = fr.tracer
        if isinstance(s, n.If):
            self.tick()
            decision = self._condition(s, fr)
            self._exec_block(s.body if decision else s.orelse, fr)
        elif isinstance(s, n.While):
            while True:
                self.tick()
                fr.line = s.span.start
                if not self._condition(s, fr):
                    break
                try:
                    self._exec_block(s.body, fr)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(s, n.For):
            self._for(s, fr)
        elif isinstance(s, n.Return):
            self.tick()
            pre = self._snap(fr) if tr else None
            try:
                value = self.eval(s.value, fr.env) if s.value is not None else None
            except SubjectRuntimeError:
                if tr:
                    tr.record(s, pre, pre, None, error=True)
                raise
            if tr:
                tr.record(s, pre, pre)
            raise _Return(value)
        else:
            self.tick()
            if tr:
                pre = self._snap(fr)
                index = tr.next_index
                if not tr.skip(index, s):
                    try:
                        self.exec_effect(s, fr.env)
                    except SubjectRuntimeError:
                        tr.record(s, pre, pre, None, error=True)
                        raise
                    tr.adjust(index, s, fr.env)
                tr.record(s, pre, self._snap(fr))
            else:
                self.exec_effect(s, fr.env)
            if isinstance(s, n.Break):
                raise _Break()
            if isinstance(s, n.Continue):
                raise _Continue()

    def _condition(self, s: n.If | n.While, fr: _Frame) -> bool:
        tr = fr.tracer
        pre = self._snap(fr) if tr else None
        try:
            value = bool(self.eval(s.test, fr.env))
        except SubjectRuntimeError:
            if tr:
                tr.record(s, pre, pre, None, error=True)
            raise
        if tr:
            value = tr.decide(s, value)
            tr.record(s, pre, pre, value)
        return value

    def _for(self, s: n.For, fr: _Frame) -> None:
        tr = fr.tracer
        fr.line = s.header.start
        self.tick()
        pre = self._snap(fr) if tr else None
        try:
            seq = _items(self.eval(s.iter, fr.env))
        except SubjectRuntimeError:
            if tr:
                tr.record(s, pre, pre, None, error=True)
            raise
        i = 0
        first = True
        while True:
            if not first:
                self.tick()
                fr.line = s.header.start
                pre = self._snap(fr) if tr else None
            first = False
            more = i < len(seq)
            if more:
                fr.env[s.target] = seq[i]
                i += 1
            if tr:
                tr.record(s, pre, self._snap(fr), more)
            if not more:
                break
            try:
                self._exec_block(s.body, fr)
            except _Break:
                break
            except _Continue:
                continue

    def exec_effect(self, s: n.Stmt, env: dict[str, Any]) -> None:
        """Apply the state effect of a simple statement to ``env``."""
        if isinstance(s, n.Assign):
            value = self.eval(s.value, env)
            self._store(s.target, value, env)
        elif isinstance(s, n.AugAssign):
            if isinstance(s.target, n.Name):
                current = self._lookup(s.target.id, env)
                rhs = self.eval(s.value, env)
                env[s.target.id] = self._augment(s.op, current, rhs)
            else:
                container = self.eval(s.target.value, env)
                index = self.eval(s.target.index, env)
                current = self._getitem(container, index)
                rhs = self.eval(s.value, env)
                self._setitem(container, index, self._augment(s.op, current, rhs))
        elif isinstance(s, n.ExprStmt):
            self.eval(s.value, env)
        elif isinstance(s, (n.Pass, n.Break, n.Continue)):
            pass
        else:
            raise TypeError(f"not a simple statement: {type(s).__name__}")

    def _augment(self, op: str, current: Any, rhs: Any) -> Any:
        if isinstance(current, list) and op == "+" and isinstance(rhs, list):
            self.tick(max(1, len(rhs)))
            current.extend(rhs)
            return current
        if isinstance(current, list) and op == "*" and _is_int(rhs):
            self._guard_size(len(current) * max(rhs, 0))
            current *= rhs
            return current
        return self.binop(op, current, rhs)

    def _store(self, target: n.Expr, value: Any, env: dict[str, Any]) -> None:
        if isinstance(target, n.Name):
            env[target.id] = value
        else:
            container = self.eval(target.value, env)
            index = self.eval(target.index, env)
            self._setitem(container, index, value)

    # -- expressions -----------------------------------------------------

    def _lookup(self, name: str, env: dict[str, Any]) -> Any:
        try:
            return env[name]
        except KeyError:
            raise SubjectRuntimeError("name_error", f"name '{name}' is not defined") from None

    def eval(self, e: n.Expr, env: dict[str, Any]) -> Any:
        if isinstance(e, n.Const):
            return e.value
        if isinstance(e, n.Name):
            return self._lookup(e.id, env)
        if isinstance(e, n.BinOp):
            return self.binop(e.op, self.eval(e.left, env), self.eval(e.right, env))
        if isinstance(e, n.UnaryOp):
            v = self.eval(e.operand, env)
            if e.op == "not":
                return not v
            if not _is_num(v):
                raise SubjectRuntimeError("type_error", f"bad operand type for unary -: '{_tname(v)}'")
            return _check_int(-v)
        if isinstance(e, n.BoolOp):
            result: Any = None
            for sub in e.values:
                result = self.eval(sub, env)
                if (e.op == "and") != bool(result):
                    return result
            return result
        if isinstance(e, n.Compare):
            return self.compare(e.op, self.eval(e.left, env), self.eval(e.right, env))
        if isinstance(e, n.Index):
            return self._getitem(self.eval(e.value, env), self.eval(e.index, env))
        if isinstance(e, n.Slice):
            return self._slice(e, env)
        if isinstance(e, n.ListExpr):
            return [self.eval(x, env) for x in e.elts]
        if isinstance(e, n.ListComp):
            items = _items(self.eval(e.iter, env))
            scope = dict(env)
            out = []
            for item in items:
                self.tick()
                scope[e.target] = item
                if e.cond is None or self.eval(e.cond, scope):
                    out.append(self.eval(e.elt, scope))
            return out
        if isinstance(e, n.Call):
            args = [self.eval(a, env) for a in e.args]
            if e.func in env:
                raise SubjectRuntimeError("type_error", f"'{_tname(env[e.func])}' object is not callable")
            if e.func in self.functions:
                return self.call(e.func, args)
            builtin = self._builtins.get(e.func)
            if builtin is None:
                raise SubjectRuntimeError("name_error", f"name '{e.func}' is not defined")
            return builtin(*args)
        if isinstance(e, n.MethodCall):
            obj = self.eval(e.obj, env)
            args = [self.eval(a, env) for a in e.args]
            if not isinstance(obj, list):
                raise SubjectRuntimeError("type_error", f"'{_tname(obj)}' object has no attribute '{e.method}'")
            if len(args) != 1:
                raise SubjectRuntimeError("type_error", f"append() takes exactly one argument ({len(args)} given)")
            obj.append(args[0])
            return None
        raise TypeError(f"unknown expression node {e!r}")

    def _guard_size(self, size: int) -> None:
        self.tick(max(1, size))

    def binop(self, op: str, a: Any, b: Any) -> Any:
        bad = SubjectRuntimeError(
            "type_error", f"unsupported operand type(s) for {op}: '{_tname(a)}' and '{_tname(b)}'"
        )
        if op == "+":
            if _is_num(a) and _is_num(b):
                return _check_int(a + b)
            if isinstance(a, str) and isinstance(b, str):
                return a + b
            if isinstance(a, list) and isinstance(b, list):
                self._guard_size(len(a) + len(b))
                return a + b
            raise bad
        if op == "*":
            if _is_num(a) and _is_num(b):
                return _check_int(a * b)
            seq, count = (a, b) if isinstance(a, (list, str)) else (b, a)
            if isinstance(seq, (list, str)) and _is_int(count):
                self._guard_size(len(seq) * max(count, 0))
                return seq * count
            raise bad
        if not (_is_num(a) and _is_num(b)):
            raise bad
        try:
            if op == "-":
                return _check_int(a - b)
            if op == "/":
                if b == 0:
                    raise SubjectRuntimeError("zero_division", "division by zero")
                return a / b
            if op == "//":
                if b == 0:
                    raise SubjectRuntimeError("zero_division", "integer division or modulo by zero")
                return _check_int(a // b)
            if op == "%":
                if b == 0:
                    raise SubjectRuntimeError("zero_division", "integer division or modulo by zero")
                return _check_int(a % b)
            if op == "**":
                if _is_int(a) and _is_int(b):
                    if b < 0:
                        if a == 0:
                            raise SubjectRuntimeError("zero_division", "0 cannot be raised to a negative power")
                        return float(a) ** b
                    if abs(a) > 1 and b > 64:
                        raise SubjectRuntimeError("overflow", "integer result exceeds 64 bits")
                    return _check_int(a**b)
                if a == 0 and b < 0:
                    raise SubjectRuntimeError("zero_division", "0.0 cannot be raised to a negative power")
                result = a**b
                if isinstance(result, complex):
                    raise SubjectRuntimeError("value_error", "complex result")
                return result
        except OverflowError:
            raise SubjectRuntimeError("overflow", "numerical result out of range") from None
        raise ValueError(f"unknown operator {op}")

    def compare(self, op: str, a: Any, b: Any) -> bool:
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        ok = (
            (_is_num(a) and _is_num(b))
            or (isinstance(a, str) and isinstance(b, str))
            or (isinstance(a, list) and isinstance(b, list))
        )
        if not ok:
            raise SubjectRuntimeError(
                "type_error", f"'{op}' not supported between instances of '{_tname(a)}' and '{_tname(b)}'"
            )
        try:
            if op == "<":
                return a < b
            if op == "<=":
                return a <= b
            if op == ">":
                return a > b
            return a >= b
        except TypeError as exc:
            raise SubjectRuntimeError("type_error", str(exc)) from None

    def _getitem(self, c: Any, i: Any) -> Any:
        if not isinstance(c, (list, str)):
            raise SubjectRuntimeError("type_error", f"'{_tname(c)}' object is not subscriptable")
        if not _is_int(i):
            raise SubjectRuntimeError("type_error", f"indices must be integers, not {_tname(i)}")
        if not -len(c) <= i < len(c):
            raise SubjectRuntimeError("index_error", f"{_tname(c)} index out of range")
        return c[i]

    def _setitem(self, c: Any, i: Any, value: Any) -> None:
        if not isinstance(c, list):
            raise SubjectRuntimeError("type_error", f"'{_tname(c)}' object does not support item assignment")
        if not _is_int(i):
            raise SubjectRuntimeError("type_error", f"indices must be integers, not {_tname(i)}")
        if not -len(c) <= i < len(c):
            raise SubjectRuntimeError("index_error", "list assignment index out of range")
        c[i] = value

    def _slice(self, e: n.Slice, env: dict[str, Any]) -> Any:
        c = self.eval(e.value, env)
        parts = []
        for p in (e.lower, e.upper, e.step):
            v = None if p is None else self.eval(p, env)
            if v is not None and not _is_int(v):
                raise SubjectRuntimeError("type_error", "slice indices must be integers or None")
            parts.append(v)
        if not isinstance(c, (list, str)):
            raise SubjectRuntimeError("type_error", f"'{_tname(c)}' object is not subscriptable")
        if parts[2] == 0:
            raise SubjectRuntimeError("value_error", "slice step cannot be zero")
        self.tick(max(1, len(c) // 16))
        return c[parts[0] : parts[1] : parts[2]]

    # -- builtins --------------------------------------------------------

    @staticmethod
    def _arity(name: str, args: tuple, lo: int, hi: int) -> None:
        if not lo <= len(args) <= hi:
            raise SubjectRuntimeError("type_error", f"{name}() got {len(args)} arguments")

    def _abs(self, *a: Any) -> Any:
        self._arity("abs", a, 1, 1)
        if not _is_num(a[0]):
            raise SubjectRuntimeError("type_error", f"bad operand type for abs(): '{_tname(a[0])}'")
        return _check_int(abs(a[0]))

    def _len(self, *a: Any) -> int:
        self._arity("len", a, 1, 1)
        if not isinstance(a[0], (list, str)):
            raise SubjectRuntimeError("type_error", f"object of type '{_tname(a[0])}' has no len()")
        return len(a[0])

    def _minmax(self, fn: Callable, name: str, a: tuple) -> Any:
        if not a:
            raise SubjectRuntimeError("type_error", f"{name} expected at least 1 argument")
        items = _items(a[0]) if len(a) == 1 else list(a)
        if not items:
            raise SubjectRuntimeError("value_error", f"{name}() arg is an empty sequence")
        self.tick(max(1, len(items) // 16))
        for x in items[1:]:
            self.compare("<", items[0], x)
        try:
            return fn(items)
        except TypeError as exc:
            raise SubjectRuntimeError("type_error", str(exc)) from None

    def _sum(self, *a: Any) -> Any:
        self._arity("sum", a, 1, 1)
        total: Any = 0
        items = _items(a[0])
        self.tick(max(1, len(items) // 16))
        for x in items:
            total = self.binop("+", total, x)
        return total

    def _range(self, *a: Any) -> list[int]:
        self._arity("range", a, 1, 3)
        if not all(_is_int(x) for x in a):
            raise SubjectRuntimeError("type_error", "range() arguments must be integers")
        if len(a) == 3 and a[2] == 0:
            raise SubjectRuntimeError("value_error", "range() arg 3 must not be zero")
        r = range(*a)
        self._guard_size(len(r))
        return list(r)

    def _sorted(self, *a: Any) -> list[Any]:
        self._arity("sorted", a, 1, 1)
        items = _items(a[0])
        self.tick(max(1, len(items)))
        for x in items[1:]:
            self.compare("<", items[0], x)
        try:
            return sorted(items)
        except TypeError as exc:
            raise SubjectRuntimeError("type_error", str(exc)) from None

    def _str(self, *a: Any) -> str:
        self._arity("str", a, 0, 1)
        return str(a[0]) if a else ""

    def _int(self, *a: Any) -> int:
        self._arity("int", a, 0, 1)
        if not a:
            return 0
        v = a[0]
        try:
            if isinstance(v, (int, float)):
                return _check_int(int(v))
            if isinstance(v, str):
                return _check_int(int(v.strip()))
        except (ValueError, OverflowError) as exc:
            raise SubjectRuntimeError("value_error", str(exc)) from None
        raise SubjectRuntimeError("type_error", f"int() argument must be a string or a number, not '{_tname(v)}'")

    def _float(self, *a: Any) -> float:
        self._arity("float", a, 0, 1)
        if not a:
            return 0.0
        v = a[0]
        try:
            if isinstance(v, (int, float)):
                return float(v)
            if isinstance(v, str):
                return float(v.strip())
        except OverflowError as exc:
            raise SubjectRuntimeError("overflow", str(exc)) from None
        except ValueError as exc:
            raise SubjectRuntimeError("value_error", str(exc)) from None
        raise SubjectRuntimeError("type_error", f"float() argument must be a string or a number, not '{_tname(v)}'")


def _check_entry(program: n.AstUnit, entry: str, args: Sequence[Any]) -> None:
    if not program.has_function(entry):
        raise ValueError(f"entry point {entry!r} not defined")
    params = program.function(entry).params
    if len(params) != len(args):
        raise ValueError(f"{entry} expects {len(params)} arguments, got {len(args)}")


def run_traced(
    program: n.AstUnit,
    entry: str,
    args: Sequence[Any],
    budget: int = DEFAULT_BUDGET,
    tracer: Optional[Tracer] = None,
) -> EvalOutcome:
    _check_entry(program, entry, args)
    interp = Interpreter(program, budget)
    try:
        value = interp.call(entry, [copy_value(a) for a in args], tracer)
    except SubjectRuntimeError as err:
        return EvalOutcome("runtime_error", interp.steps, None, err.kind, err.message, err.line)
    except BudgetExceeded:
        return EvalOutcome("step_budget_exceeded", interp.steps)
    return EvalOutcome("returned", interp.steps, value)


def run_program(program: n.AstUnit, entry: str, args: Sequence[Any], budget: int = DEFAULT_BUDGET) -> EvalOutcome:
    """Run ``entry`` on ``args``; never raises for subject-level failures."""
    return run_traced(program, entry, args, budget)


def eval_expr(
    expr: n.Expr,
    state: dict[str, Any],
    program: Optional[n.AstUnit] = None,
    budget: int = DEFAULT_BUDGET,
) -> Any:
    """Evaluate ``expr`` over ``state`` without touching it.

    Raises :class:`SubjectRuntimeError` (or :class:`BudgetExceeded`).
    """
    interp = Interpreter(program or n.AstUnit(()), budget)
    return interp.eval(expr, copy_state(state))


def apply_effect(
    stmt: n.Stmt,
    state: dict[str, Any],
    program: Optional[n.AstUnit] = None,
    budget: int = DEFAULT_BUDGET,
) -> dict[str, Any]:
    """Return the state after executing simple statement ``stmt`` from ``state``."""
    env = copy_state(state)
    Interpreter(program or n.AstUnit(()), budget).exec_effect(stmt, env)
    return env
