"""Ground-truth traces recorded from the reference interpreter."""

from __future__ import annotations

from typing import Any, Optional, Sequence

from ..cfg import Cfg, build_cfg
from ..trace import Trace, TraceStep
from . import nodes as n
from .values import copy_value
from .interp import DEFAULT_BUDGET, Tracer, run_traced


def steps_from_raw(tracer: Tracer, fn: n.FunctionDef, cfg: Cfg) -> list[TraceStep]:
    ordinals = n.statement_ordinals(fn)
    steps = []
    for i, raw in enumerate(tracer.steps, start=1):
        node = cfg.node_for(raw.stmt, ordinals)
        steps.append(TraceStep(i, node.span.start, node.id, raw.pre, raw.post, raw.decision))
    return steps


def oracle_trace(
    program: n.AstUnit,
    entry: str,
    args: Sequence[Any],
    budget: int = DEFAULT_BUDGET,
    program_id: str = "",
    cfg: Optional[Cfg] = None,
) -> Trace:
    """Run ``entry`` and record every executed node with its true states and decisions.

    Runtime errors end the trace at the failing step with an error marker as
    output; a blown step budget ends it with ``<error step_budget_exceeded>``.
    """
    cfg = cfg or build_cfg(program, entry)
    tracer = Tracer()
    outcome = run_traced(program, entry, args, budget, tracer)
    steps = steps_from_raw(tracer, program.function(entry), cfg)
    return Trace(program_id, [copy_value(a) for a in args], steps, outcome.output, True)
