"""Check predicted traces against the CFG and the reference semantics, and phrase repair hints.

Validation is concrete: every condition, assignment and return value in a
trace is re-evaluated with the reference interpreter over the state the trace
itself claims held before the step.  Steps whose pre-state lacks a variable
the check needs are undecidable; their recorded behaviour is accepted and the
step is reported as such.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

from .cfg import DECISION_NODES, Cfg, CfgEdge, CfgNode, is_step_feasible
from .lang import nodes as n
from .lang.interp import BudgetExceeded, Interpreter, SubjectRuntimeError
from .lang.render import render_expr
from .lang.values import ErrorMarker, copy_state, outputs_equal, render_value
from .trace import Trace, TraceStep

DIAGNOSIS_KINDS = (
    "infeasible_edge",
    "condition_mismatch",
    "state_mismatch",
    "output_mismatch",
    "cross_variant_disagreement",
    "unmapped_step",
)

CHECK_BUDGET = 100_000


@dataclass(frozen=True)
class Diagnosis:
    kind: str
    node: Optional[str]
    step: int
    detail: str
    excerpt: str = ""
    expected: Any = None
    observed: Any = None
    # condition checks: evaluated value (or ErrorMarker) and decision taken
    condition_value: Any = None
    decision: Optional[bool] = None

    def render(self) -> str:
        where = f"step {self.step}" if self.step else "trace"
        node = f" node {self.node}" if self.node else ""
        return f"{self.kind} at {where}{node}: {self.detail}"

    def to_json(self) -> dict[str, Any]:
        def lit(v: Any) -> Any:
            try:
                return render_value(v)
            except TypeError:
                return repr(v)

        return {
            "kind": self.kind,
            "node": self.node,
            "step": self.step,
            "detail": self.detail,
            "excerpt": self.excerpt,
            "expected": None if self.expected is None else lit(self.expected),
            "observed": None if self.observed is None else lit(self.observed),
        }


@dataclass(frozen=True)
class Inspection:
    diagnoses: tuple[Diagnosis, ...]
    undecidable_steps: tuple[int, ...] = ()

    @property
    def healthy(self) -> bool:
        return not self.diagnoses


@dataclass(frozen=True)
class Feedback:
    diagnoses: tuple[Diagnosis, ...]
    suggestion: str
    edge: Optional[CfgEdge] = None

    @property
    def focus(self) -> Diagnosis:
        return self.diagnoses[0]

    def render(self) -> str:
        f = self.focus
        lines = [f"FOCUS STEP {f.step} | NODE {f.node or '-'} | KIND {f.kind}", self.suggestion]
        rest = self.diagnoses[1:]
        if rest:
            lines.append("Other findings (possibly consequences of the first):")
            lines.extend(f"- {d.render()}" for d in rest)
        return "\n".join(lines)


def _free_names(expr: Optional[n.Expr]) -> set[str]:
    bound = {e.target for e in n.walk_expr(expr) if isinstance(e, n.ListComp)}
    return n.names_read(expr) - bound


def _reads(stmt: n.Stmt) -> set[str]:
    if isinstance(stmt, n.Assign):
        names = _free_names(stmt.value)
        if not isinstance(stmt.target, n.Name):
            names |= _free_names(stmt.target)
        return names
    out: set[str] = set()
    for e in n.statement_exprs(stmt):
        out |= _free_names(e)
    return out


def _fmt_state(state: dict[str, Any], names: Iterable[str]) -> str:
    return ", ".join(f"{k} = {render_value(state[k])}" for k in sorted(names) if k in state)


def _lines(span: Optional[n.Span]) -> str:
    if span is None:
        return ""
    return f"line {span.start}" if span.start == span.end else f"lines {span.start}-{span.end}"


@dataclass
class _Iter:
    items: Optional[list[Any]]  # None when the iterable could not be evaluated
    pos: int = 0


class _Checker:
    def __init__(self, trace: Trace, cfg: Cfg, program: n.AstUnit):
        self.trace = trace
        self.cfg = cfg
        self.program = program
        self.fn = program.function(cfg.function)
        self.locals = set(n.local_names(self.fn))
        self.out: list[Diagnosis] = []
        self.undecidable: list[int] = []

    def interp(self) -> Interpreter:
        return Interpreter(self.program, CHECK_BUDGET)

    def add(self, kind: str, node: Optional[CfgNode], step: TraceStep, detail: str, **kw: Any) -> None:
        self.out.append(
            Diagnosis(kind, node.id if node else step.node, step.index, detail, node.label if node else "", **kw)
        )

    def missing(self, names: set[str], state: dict[str, Any]) -> bool:
        return any(x in self.locals and x not in state for x in names)

    # -- state comparison ---------------------------------------------------

    def compare_states(self, node: CfgNode, step: TraceStep, expected: dict[str, Any], written: set[str]) -> None:
        post = step.post_state
        for name in sorted(set(expected) | set(post)):
            if name not in post:
                self.add("state_mismatch", node, step, f"{name} disappears from the state", expected=expected[name])
                continue
            if name not in expected:
                if name not in self.locals:
                    why = f"{name} is not a variable of {self.fn.name}"
                else:
                    why = f"{name} is not assigned at this step but appears with value {render_value(post[name])}"
                self.add("state_mismatch", node, step, why, observed=post[name])
                continue
            if outputs_equal(expected[name], post[name]):
                continue
            # A list changed through an alias of the written variable.
            if name not in written and isinstance(post[name], list) and any(
                w in expected and outputs_equal(expected[w], post[name]) for w in written
            ):
                continue
            self.add(
                "state_mismatch",
                node,
                step,
                f"expected {name} = {render_value(expected[name])} after this step, trace has {render_value(post[name])}",
                expected=expected[name],
                observed=post[name],
            )

    # -- per-kind checks ----------------------------------------------------

    def attempt(self, step: TraceStep, names: set[str], thunk: Any) -> tuple[str, Any]:
        """Run a check; ``("undecidable", None)`` when it trips over a variable the trace omitted."""
        try:
            return "ok", thunk()
        except SubjectRuntimeError as err:
            if err.kind == "name_error" and self.missing(names, step.pre_state):
                self.undecidable.append(step.index)
                return "undecidable", None
            return "error", err
        except BudgetExceeded:
            self.undecidable.append(step.index)
            return "undecidable", None

    def check_error_step(self, node: CfgNode, step: TraceStep) -> None:
        stmt = node.stmt
        env = copy_state(step.pre_state)
        it = self.interp()
        if isinstance(stmt, n.For):
            names, thunk = _free_names(stmt.iter), lambda: it.eval(stmt.iter, env)
        elif isinstance(stmt, (n.If, n.While)):
            names, thunk = _free_names(stmt.test), lambda: it.eval(stmt.test, env)
        elif isinstance(stmt, n.Return):
            names, thunk = _free_names(stmt.value), lambda: stmt.value is not None and it.eval(stmt.value, env)
        else:
            names, thunk = _reads(stmt), lambda: it.exec_effect(stmt, env)
        status, result = self.attempt(step, names, thunk)
        if status == "ok" and isinstance(stmt, n.For) and not isinstance(result, (list, str)):
            return  # iterating a non-sequence raises
        if status == "ok":
            self.add(
                "output_mismatch",
                node,
                step,
                f"the trace ends in {render_value(self.trace.final_output)} here, but this step executes without error",
                observed=self.trace.final_output,
            )

    def check_condition(self, node: CfgNode, step: TraceStep) -> None:
        stmt = node.stmt
        assert isinstance(stmt, (n.If, n.While))
        cond = render_expr(stmt.test)
        if step.branch is None:
            self.add("condition_mismatch", node, step, f"no decision recorded for condition {cond}")
            return
        names = _free_names(stmt.test)
        env = copy_state(step.pre_state)
        it = self.interp()
        status, value = self.attempt(step, names, lambda: bool(it.eval(stmt.test, env)))
        if status == "undecidable":
            return
        if status == "error":
            self.add(
                "condition_mismatch",
                node,
                step,
                f"condition {cond} raises {value.kind} ({value.message}) but the trace continues",
                condition_value=value.marker(),
                decision=step.branch,
            )
            return
        if value != step.branch:
            shown = _fmt_state(step.pre_state, names)
            self.add(
                "condition_mismatch",
                node,
                step,
                f"condition {cond} is {value} with {shown or 'the current state'}, trace took {step.branch}",
                expected=value,
                observed=step.branch,
                condition_value=value,
                decision=step.branch,
            )
        self.compare_states(node, step, env, set())

    def check_for_head(self, node: CfgNode, step: TraceStep, iters: dict[str, _Iter]) -> None:
        stmt = node.stmt
        assert isinstance(stmt, n.For)
        it = iters.get(node.id)
        if it is None:
            interp = self.interp()
            status, value = self.attempt(
                step, _free_names(stmt.iter), lambda: interp.eval(stmt.iter, copy_state(step.pre_state))
            )
            if status == "ok" and not isinstance(value, (list, str)):
                status, value = "error", SubjectRuntimeError("type_error", "object is not iterable")
            if status == "error":
                self.add(
                    "condition_mismatch",
                    node,
                    step,
                    f"iterating {render_expr(stmt.iter)} raises {value.kind} but the trace continues",
                    condition_value=value.marker(),
                    decision=step.branch,
                )
            it = _Iter(list(value) if status == "ok" else None)
            iters[node.id] = it
        if step.branch is None:
            self.add("condition_mismatch", node, step, f"no loop decision recorded for {node.label}")
            return
        if it.items is None:
            self.undecidable.append(step.index)
            if step.branch:
                it.pos += 1
            return
        more = it.pos < len(it.items)
        expected = copy_state(step.pre_state)
        if more:
            expected[stmt.target] = it.items[it.pos]
        if more != step.branch:
            remaining = len(it.items) - it.pos
            nxt = f" (next {stmt.target} = {render_value(it.items[it.pos])})" if more else ""
            self.add(
                "condition_mismatch",
                node,
                step,
                f"loop over {render_expr(stmt.iter)} has {remaining} item(s) left{nxt}, "
                f"trace {'continued' if step.branch else 'exited'}",
                expected=more,
                observed=step.branch,
                condition_value=more,
                decision=step.branch,
            )
        else:
            self.compare_states(node, step, expected, {stmt.target})
        if step.branch:
            it.pos += 1

    def check_simple(self, node: CfgNode, step: TraceStep) -> None:
        stmt = node.stmt
        env = copy_state(step.pre_state)
        it = self.interp()
        status, err = self.attempt(step, _reads(stmt), lambda: it.exec_effect(stmt, env))
        if status == "undecidable":
            return
        if status == "error":
            self.add(
                "state_mismatch",
                node,
                step,
                f"this statement raises {err.kind} ({err.message}) but the trace continues",
                expected=err.marker(),
            )
            return
        self.compare_states(node, step, env, n.written_names(stmt))

    def check_return(self, node: CfgNode, step: TraceStep, last: bool) -> None:
        stmt = node.stmt
        assert isinstance(stmt, n.Return)
        env = copy_state(step.pre_state)
        it = self.interp()
        status, value = self.attempt(
            step, _free_names(stmt.value), lambda: it.eval(stmt.value, env) if stmt.value is not None else None
        )
        if status == "undecidable":
            return
        if status == "error":
            self.add(
                "output_mismatch",
                node,
                step,
                f"the returned expression raises {value.kind} ({value.message})",
                expected=value.marker(),
                observed=self.trace.final_output,
            )
            return
        self.compare_states(node, step, env, set())
        if last and not _same_output(value, self.trace.final_output):
            self.add(
                "output_mismatch",
                node,
                step,
                f"the return evaluates to {render_value(value)} but the trace outputs {render_value(self.trace.final_output)}",
                expected=value,
                observed=self.trace.final_output,
            )

    # -- driver -------------------------------------------------------------

    def run(self) -> Inspection:
        steps = self.trace.steps
        cfg = self.cfg
        final = self.trace.final_output
        budget_out = isinstance(final, ErrorMarker) and final.kind == "step_budget_exceeded"
        error_end = isinstance(final, ErrorMarker) and not budget_out
        prev: Optional[str] = cfg.entry
        prev_decision: Optional[bool] = None
        iters: dict[str, _Iter] = {}
        for i, step in enumerate(steps):
            last = i == len(steps) - 1
            node = cfg.nodes.get(step.node) if step.node else None
            if node is None or node.kind in ("entry", "exit"):
                self.add("unmapped_step", None, step, f"line {step.line} does not belong to any statement")
                prev, prev_decision = None, None
                continue
            if prev is not None and not is_step_feasible(cfg, prev, node.id, prev_decision):
                src = cfg.nodes[prev]
                nexts = ", ".join(f"{e.dst} via {e.kind}" for e in cfg.successors(prev)
                                  if prev_decision is None or src.kind not in DECISION_NODES
                                  or e == cfg.decision_edge(prev, prev_decision))
                self.add(
                    "infeasible_edge",
                    node,
                    step,
                    f"no path from node {prev} (line {src.line}) to node {node.id} (line {node.line}); "
                    f"next node must be {nexts or 'none'}",
                    expected=prev,
                )
            for head in [h for h in iters if not (cfg.nodes[h].scope and cfg.nodes[h].scope.contains(node.span))]:
                del iters[head]
            if last and error_end:
                self.check_error_step(node, step)
            elif node.kind == "branch" or (node.kind == "loop_head" and isinstance(node.stmt, n.While)):
                self.check_condition(node, step)
            elif node.kind == "loop_head":
                self.check_for_head(node, step, iters)
                if step.branch is False:
                    iters.pop(node.id, None)
            elif node.kind == "return":
                self.check_return(node, step, last)
            else:
                self.check_simple(node, step)
            prev = node.id
            prev_decision = step.branch if node.kind in DECISION_NODES else None

        if steps and self.trace.terminated and not error_end and not budget_out:
            tail = steps[-1]
            node = cfg.nodes.get(tail.node) if tail.node else None
            if node is not None and node.kind != "return":
                if prev is not None and not is_step_feasible(cfg, prev, cfg.exit, prev_decision):
                    self.add(
                        "infeasible_edge",
                        node,
                        tail,
                        f"the trace stops at node {node.id} (line {node.line}) without reaching a return",
                    )
                elif final is not None:
                    self.add(
                        "output_mismatch",
                        node,
                        tail,
                        f"falling off the end of {self.fn.name} returns None, trace outputs {render_value(final)}",
                        expected=None,
                        observed=final,
                    )
        ordered = sorted(self.out, key=lambda d: d.step)
        return Inspection(tuple(ordered), tuple(sorted(set(self.undecidable))))


def _same_output(a: Any, b: Any) -> bool:
    if isinstance(a, ErrorMarker) or isinstance(b, ErrorMarker):
        return isinstance(a, ErrorMarker) and isinstance(b, ErrorMarker) and a.kind == b.kind
    return outputs_equal(a, b)


def inspect_trace(trace: Trace, cfg: Cfg, program: n.AstUnit) -> Inspection:
    """Full validation result, including the steps that could not be decided."""
    return _Checker(trace, cfg, program).run()


def validate_trace(trace: Trace, cfg: Cfg, program: n.AstUnit) -> list[Diagnosis]:
    """Diagnoses for ``trace`` (empty means healthy); sets the verdict if still unchecked."""
    result = inspect_trace(trace, cfg, program)
    if trace.verdict == "unchecked":
        trace.set_verdict("healthy" if result.healthy else "problematic")
    return list(result.diagnoses)


# -- cross-variant comparison ---------------------------------------------------


def _decision_sequence(trace: Trace, corr: Any = None) -> dict[tuple[str, int], tuple[bool, int]]:
    """(base node, k-th visit) -> (decision in base polarity, step index)."""
    seen: dict[str, int] = {}
    out: dict[tuple[str, int], tuple[bool, int]] = {}
    for step in trace.steps:
        if step.branch is None or step.node is None:
            continue
        node = step.node
        decision = step.branch
        if corr is not None:
            if node not in corr.mapping:
                continue
            if node in corr.inverted:
                decision = not decision
            node = corr.mapping[node]
        k = seen.get(node, 0)
        seen[node] = k + 1
        out[(node, k)] = (decision, step.index)
    return out


def cross_check(bundle: Any, correspondences: Sequence[Any] = ()) -> list[Diagnosis]:
    """Compare final outputs across the original and its variants.

    ``bundle`` exposes ``original`` and ``variants`` traces;
    ``correspondences[i]`` maps nodes of variant ``i`` onto the original.
    """
    traces: list[Trace] = [bundle.original, *bundle.variants]
    labels = ["original"] + [f"variant{i + 1}" for i in range(len(bundle.variants))]
    groups: list[list[int]] = []
    for i, t in enumerate(traces):
        for g in groups:
            if _same_output(traces[g[0]].final_output, t.final_output):
                g.append(i)
                break
        else:
            groups.append([i])
    if len(groups) <= 1:
        return []
    groups.sort(key=len, reverse=True)
    tie = len(groups[0]) == len(groups[1])
    majority = None if tie else groups[0]
    minority = [labels[i] for g in (groups if tie else groups[1:]) for i in g]
    shown = ", ".join(f"{labels[i]}={render_value(t.final_output)}" for i, t in enumerate(traces))

    # Earliest branch decision at which the original parts ways with a variant
    # whose output differs from it.
    base = _decision_sequence(bundle.original)
    orig_group = next(g for g in groups if 0 in g)
    best: Optional[tuple[int, str]] = None
    for vi, corr in enumerate(correspondences):
        if vi + 1 >= len(traces) or (vi + 1) in orig_group or corr is None:
            continue
        other = _decision_sequence(traces[vi + 1], corr)
        for key, (decision, step_index) in base.items():
            if key in other and other[key][0] != decision:
                if best is None or step_index < best[0]:
                    best = (step_index, key[0])
                break
    if tie:
        detail = f"outputs disagree with no majority ({shown})"
    else:
        assert majority is not None
        detail = (
            f"outputs disagree ({shown}); majority {render_value(traces[majority[0]].final_output)}, "
            f"minority {', '.join(minority)}"
        )
    step, node = (best[0], best[1]) if best else (0, None)
    if best:
        detail += f"; first diverging decision at original step {step}"
    return [
        Diagnosis(
            "cross_variant_disagreement",
            node,
            step,
            detail,
            expected=None if tie else traces[majority[0]].final_output,  # type: ignore[index]
            observed=bundle.original.final_output,
        )
    ]


# -- feedback -------------------------------------------------------------------


def _first_divergence(diagnoses: Sequence[Diagnosis]) -> list[Diagnosis]:
    # Stable on step alone: within a step, validation already emits findings
    # in check order, and end-of-trace findings come after the per-step ones.
    return sorted(diagnoses, key=lambda d: d.step if d.step > 0 else float("inf"))


def _arm_text(cfg: Cfg, node: CfgNode, decision: bool) -> tuple[Optional[CfgEdge], str]:
    edge = cfg.decision_edge(node.id, decision)
    if edge is None:
        return None, ""
    target = cfg.nodes[edge.dst]
    skipped = node.false_span if decision else node.true_span
    text = f"take the {edge.kind} edge to node {edge.dst}"
    if target.kind == "exit":
        text += " (function exit)"
    else:
        text += f" (line {target.line}: {target.label})"
    if skipped is not None:
        text += f", skipping {_lines(skipped)}"
    return edge, text


def synthesize_feedback(diagnoses: Sequence[Diagnosis], cfg: Cfg, trace: Optional[Trace] = None) -> Feedback:
    """Turn diagnoses into a repair hint aimed at the earliest problematic step."""
    if not diagnoses:
        raise ValueError("no diagnoses to explain")
    ordered = _first_divergence(diagnoses)
    d = ordered[0]
    node = cfg.nodes.get(d.node) if d.node else None
    step = None
    if trace is not None and d.step:
        step = next((s for s in trace.steps if s.index == d.step), None)
    edge: Optional[CfgEdge] = None
    where = f"Step {d.step}" if d.step else "The trace"
    if node is not None:
        where += f", node {node.id} (line {node.line}: {node.label})"

    if d.kind == "condition_mismatch" and isinstance(d.condition_value, bool) and node is not None:
        edge, arm = _arm_text(cfg, node, d.condition_value)
        if isinstance(node.stmt, n.For):
            head = f"the loop {'still has items' if d.condition_value else 'is exhausted'}"
        else:
            test = render_expr(node.stmt.test)  # type: ignore[union-attr]
            values = _fmt_state(step.pre_state, _free_names(node.stmt.test)) if step else ""  # type: ignore[union-attr]
            head = f"{test} is {d.condition_value}" + (f" for {values}" if values else "")
        suggestion = f"{where}: {head}, so {arm}. The trace took the {'true' if d.decision else 'false'} edge instead."
        if node.kind == "branch" and not d.condition_value and node.true_span is not None:
            suggestion += f" The body on {_lines(node.true_span)} must not run for this state."
    elif d.kind == "condition_mismatch":
        suggestion = f"{where}: {d.detail}. Record the decision this condition actually produces."
    elif d.kind == "state_mismatch":
        suggestion = f"{where}: {d.detail}. Recompute this statement from the values held before it."
        if node is not None:
            edge = cfg.successors(node.id)[0] if cfg.successors(node.id) else None
    elif d.kind == "output_mismatch":
        if isinstance(d.observed, ErrorMarker) and d.expected is None:
            suggestion = f"{where}: {d.detail}. Continue the trace past this step."
        else:
            suggestion = f"{where}: {d.detail}. The OUTPUT line must be {render_value(d.expected)}."
    elif d.kind == "infeasible_edge":
        suggestion = f"{where}: {d.detail}. Follow the control-flow graph edge by edge."
    elif d.kind == "unmapped_step":
        lines = sorted({nd.line for nd in cfg.nodes.values() if nd.kind not in ("entry", "exit")})
        suggestion = f"{where}: {d.detail}. Use the line of an executed statement, one of {lines}."
    else:
        suggestion = f"{where}: {d.detail}. Re-trace the original program carefully"
        suggestion += " from this decision." if d.step else "."
    return Feedback(tuple(ordered), suggestion, edge)
