"""The Executor: ask a reasoner for traces of programs and refine them on feedback."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional, Sequence

from .backend.base import Backend, BackendError
from .backend.prompts import execute_request, refine_request
from .cfg import Cfg, build_cfg
from .inspector import Feedback
from .lang import nodes as n
from .lang.parser import parse
from .lang.values import ErrorMarker, copy_value
from .mutator import MutantProgram
from .trace import Trace, parse_trace_text, trace_to_json

log = logging.getLogger(__name__)

MAX_ROUNDS = 2


@dataclass(frozen=True)
class SourceProgram:
    id: str
    text: str
    entry_point: str
    origin: str = ""

    @cached_property
    def ast(self) -> n.AstUnit:
        return parse(self.text)

    @cached_property
    def cfg(self) -> Cfg:
        return build_cfg(self.ast, self.entry_point)


@dataclass
class TraceBundle:
    input: list[Any]
    original: Trace
    variants: list[Trace] = field(default_factory=list)
    rounds: int = 0

    @property
    def traces(self) -> list[Trace]:
        return [self.original, *self.variants]

    def to_json(self) -> dict[str, Any]:
        return {
            "original": trace_to_json(self.original),
            "variants": [trace_to_json(t) for t in self.variants],
            "rounds": self.rounds,
            "transcript": self.original.messages,
        }


@dataclass(frozen=True)
class RefinedResult:
    trace: Trace
    rounds_used: int
    resolved: bool


def failed_trace(program_id: str, args: Sequence[Any], kind: str, message: str, messages=()) -> Trace:
    """A stand-in trace for a reasoner answer we could not use; always counts as wrong."""
    trace = Trace(program_id, [copy_value(a) for a in args], [], ErrorMarker(kind, message), True)
    trace.messages = list(messages)
    trace.set_verdict("problematic")
    return trace


def _ask(request, backend: Backend, cfg: Cfg, args: Sequence[Any], program_id: str) -> Trace:
    reason = ""
    for attempt in range(2):
        reply = backend.complete(request)
        report = parse_trace_text(str(reply), cfg, args, program_id)
        if report.trace is not None:
            report.trace.messages = list(request.messages) + [{"role": "assistant", "content": str(reply)}]
            return report.trace
        reason = report.fatal or "unparseable"
        log.info("%s: unusable trace (%s), attempt %d", program_id, reason, attempt + 1)
    return failed_trace(program_id, args, "unparseable_trace", reason, request.messages)


def trace_once(
    program: SourceProgram | MutantProgram,
    args: Sequence[Any],
    backend: Backend,
    cfg: Optional[Cfg] = None,
) -> Trace:
    """One traced run; a reply with no usable trace is retried once.

    Backend errors propagate to the caller.
    """
    text, entry, pid = _describe(program)
    cfg = cfg or build_cfg(parse(text), entry)
    return _ask(execute_request(text, entry, args), backend, cfg, args, pid)


def _describe(program: SourceProgram | MutantProgram) -> tuple[str, str, str]:
    if isinstance(program, MutantProgram):
        return program.text, program.entry, f"{program.base_id}~{program.op_chain}"
    return program.text, program.entry_point, program.id


def trace_bundle(
    original: SourceProgram,
    variants: Sequence[MutantProgram],
    args: Sequence[Any],
    backend: Backend,
    cfgs: Optional[Sequence[Cfg]] = None,
) -> TraceBundle:
    """Trace the original and every variant on one input; failures stay local to their trace."""
    programs: list[SourceProgram | MutantProgram] = [original, *variants]
    traces = []
    for i, prog in enumerate(programs):
        cfg = cfgs[i] if cfgs is not None else None
        try:
            traces.append(trace_once(prog, args, backend, cfg))
        except BackendError as err:
            log.warning("backend failure while tracing %s: %s", _describe(prog)[2], err)
            traces.append(failed_trace(_describe(prog)[2], args, "backend_error", str(err)))
    return TraceBundle([copy_value(a) for a in args], traces[0], traces[1:])


def refine(trace: Trace, feedback: Feedback, backend: Backend, cfg: Cfg) -> Trace:
    """Continue the trace's conversation with the rendered feedback and parse the new answer.

    The caller owns the round counter and the round budget.
    """
    if not trace.messages or trace.messages[-1]["role"] != "assistant":
        raise ValueError("only a trace produced by a reasoner conversation can be refined")
    request = refine_request(trace.messages, feedback.render())
    return _ask(request, backend, cfg, trace.input, trace.program_id)
