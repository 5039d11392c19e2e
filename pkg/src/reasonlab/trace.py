"""Predicted execution traces and the line protocol reasoners speak.

A trace is a list of steps, one per executed CFG node, each carrying the
variable state after the step plus the decision taken at branches and loop
heads.  On the wire a step is one line::

    STEP 3 | LINE 5 | STATE count=1, num=-33 | BRANCH false

and the trace ends with ``OUTPUT <literal>``.  Only the post-state travels;
the pre-state of a step is the post-state of the one before it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .cfg import DECISION_NODES, Cfg, resolve_line
from .lang.values import ErrorMarker, LiteralError, copy_state, copy_value, outputs_equal, parse_literal, parse_literal_prefix, render_value

VERDICTS = ("unchecked", "healthy", "problematic")

_STEP_RE = re.compile(
    r"^[\s>*#`\-]*STEP\s+(\d+)\s*\|\s*LINE\s+(\d+)\s*\|\s*STATE\b\s*(.*)$",
    re.IGNORECASE,
)
OUTPUT_RE = re.compile(r"^[\s>*#`\-]*OUTPUT\b:?\s*(.*?)[\s`*]*$", re.IGNORECASE)
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_BRANCH_RE = re.compile(r"\|\s*BRANCH\s+(true|false)\b[\s`*]*$", re.IGNORECASE)


@dataclass(frozen=True)
class TraceStep:
    index: int
    line: int
    node: Optional[str]
    pre_state: dict[str, Any] = field(default_factory=dict)
    post_state: dict[str, Any] = field(default_factory=dict)
    branch: Optional[bool] = None


@dataclass
class Trace:
    program_id: str
    input: list[Any]
    steps: list[TraceStep]
    final_output: Any = None
    terminated: bool = False
    verdict: str = "unchecked"
    # Conversation that produced the trace, kept so a refinement can continue it.
    messages: list[dict[str, str]] = field(default_factory=list, compare=False, repr=False)
    raw: str = field(default="", compare=False, repr=False)

    def set_verdict(self, verdict: str) -> None:
        if verdict not in VERDICTS[1:]:
            raise ValueError(f"bad verdict {verdict!r}")
        if self.verdict != "unchecked":
            raise ValueError(f"verdict already set to {self.verdict!r}")
        self.verdict = verdict

    @property
    def is_error(self) -> bool:
        return isinstance(self.final_output, ErrorMarker)


@dataclass(frozen=True)
class TraceParseReport:
    trace: Optional[Trace]
    ignored_lines: int
    fatal: Optional[str] = None
    warnings: int = 0


def parse_output_literal(text: str) -> Any:
    """Read an OUTPUT payload: a value literal or ``<error kind: message>``."""
    text = text.strip()
    if text.startswith("<error") and text.endswith(">"):
        inner = text[len("<error") : -1].strip()
        kind, _, message = inner.partition(":")
        return ErrorMarker(kind.strip() or "error", message.strip())
    return parse_literal(text)


def _parse_state(text: str) -> tuple[dict[str, Any], Optional[bool]]:
    """Parse ``a=1, b=[2, 3] | BRANCH true``; raises ``LiteralError`` on junk."""
    branch: Optional[bool] = None
    m = _BRANCH_RE.search(text)
    if m:
        branch = m.group(1).lower() == "true"
        text = text[: m.start()]
    text = text.rstrip(" \t`*|")
    state: dict[str, Any] = {}
    pos = 0
    while True:
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if pos >= len(text):
            break
        name = _NAME_RE.match(text, pos)
        if not name:
            raise LiteralError("expected a variable name", pos)
        pos = name.end()
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if pos >= len(text) or text[pos] != "=":
            raise LiteralError("expected '='", pos)
        value, pos = parse_literal_prefix(text, pos + 1)
        state[name.group(0)] = value
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if pos < len(text):
            if text[pos] != ",":
                raise LiteralError("expected ','", pos)
            pos += 1
    return state, branch


@dataclass
class _RawLine:
    index: int
    line: int
    state: dict[str, Any]
    branch: Optional[bool]


def parse_trace_text(
    text: str,
    cfg: Cfg,
    inputs: Optional[Sequence[Any]] = None,
    program_id: str = "",
) -> TraceParseReport:
    """Extract a trace from free reasoner output.

    Prose and malformed lines are skipped and counted.  When several OUTPUT
    lines appear, the last block of steps ending in an OUTPUT wins, so a
    reasoner that corrects itself mid-answer is read at its final word.
    ``inputs`` supplies the entry binding; without it the parameters are
    read off the first step's state.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    blocks: list[tuple[list[_RawLine], Any, int]] = []
    current: list[_RawLine] = []
    ignored = 0
    pending_ignored = 0
    for raw_line in text.splitlines():
        m = _STEP_RE.match(raw_line)
        if m:
            try:
                state, branch = _parse_state(m.group(3))
            except (LiteralError, RecursionError):
                pending_ignored += 1
                continue
            current.append(_RawLine(int(m.group(1)), int(m.group(2)), state, branch))
            continue
        m = OUTPUT_RE.match(raw_line)
        if m and m.group(1):
            try:
                output = parse_output_literal(m.group(1))
            except (LiteralError, RecursionError):
                pending_ignored += 1
                continue
            blocks.append((current, output, pending_ignored))
            current, pending_ignored = [], 0
            continue
        pending_ignored += 1

    if not blocks:
        return TraceParseReport(None, ignored + pending_ignored + len(current), "no OUTPUT line")
    # Earlier blocks count as ignored text; steps after the last OUTPUT too.
    chosen = max((i for i, b in enumerate(blocks) if b[0]), default=len(blocks) - 1)
    for i, (steps, _, skipped) in enumerate(blocks):
        ignored += skipped
        if i != chosen:
            ignored += len(steps) + 1
    ignored += pending_ignored + len(current)
    raw_steps, output, _ = blocks[chosen]
    if not raw_steps:
        return TraceParseReport(None, ignored, "zero parseable steps")

    warnings = 0
    indices = [r.index for r in raw_steps]
    if any(b <= a for a, b in zip(indices, indices[1:])) or indices[0] < 1:
        warnings += 1
        indices = list(range(1, len(raw_steps) + 1))

    if inputs is not None:
        args = [copy_value(a) for a in inputs]
        prev_post: dict[str, Any] = dict(zip(cfg.params, [copy_value(a) for a in args]))
    else:
        first = raw_steps[0].state
        prev_post = {p: first[p] for p in cfg.params if p in first}
        args = [prev_post[p] for p in cfg.params if p in prev_post]

    steps: list[TraceStep] = []
    prev_node: Optional[str] = cfg.entry
    prev_branch: Optional[bool] = None
    for idx, r in zip(indices, raw_steps):
        node = resolve_line(cfg, r.line, prev_node, prev_branch)
        post = copy_state(prev_post)
        post.update(r.state)
        steps.append(TraceStep(idx, r.line, node, copy_state(prev_post), post, r.branch))
        prev_post = post
        prev_node = node
        prev_branch = r.branch if node is not None and cfg.nodes[node].kind in DECISION_NODES else None

    trace = Trace(program_id, args, steps, output, True, raw=text)
    return TraceParseReport(trace, ignored, None, warnings)


def render_trace(trace: Trace) -> str:
    if not trace.steps:
        raise ValueError("cannot render a trace without steps")
    if not trace.terminated:
        raise ValueError("cannot render an unterminated trace")
    lines = []
    for step in trace.steps:
        state = ", ".join(f"{k}={render_value(v)}" for k, v in step.post_state.items())
        line = f"STEP {step.index} | LINE {step.line} | STATE {state}".rstrip()
        if step.branch is not None:
            line += f" | BRANCH {'true' if step.branch else 'false'}"
        lines.append(line)
    lines.append(f"OUTPUT {render_value(trace.final_output)}")
    return "\n".join(lines) + "\n"


def traces_equivalent(a: Trace, b: Trace) -> bool:
    """Same steps (line, node, states, decision) and same final output, with float tolerance."""
    if len(a.steps) != len(b.steps) or a.terminated != b.terminated:
        return False
    if isinstance(a.final_output, ErrorMarker) or isinstance(b.final_output, ErrorMarker):
        if a.final_output != b.final_output:
            return False
    elif not outputs_equal(a.final_output, b.final_output):
        return False
    for x, y in zip(a.steps, b.steps):
        if (x.index, x.line, x.node, x.branch) != (y.index, y.line, y.node, y.branch):
            return False
        for sa, sb in ((x.pre_state, y.pre_state), (x.post_state, y.post_state)):
            if sa.keys() != sb.keys() or not all(outputs_equal(sa[k], sb[k]) for k in sa):
                return False
    return True


# -- JSON Lines persistence ----------------------------------------------------


def _state_json(state: dict[str, Any]) -> dict[str, str]:
    return {k: render_value(v) for k, v in state.items()}


def trace_to_json(trace: Trace) -> dict[str, Any]:
    return {
        "program_id": trace.program_id,
        "input": [render_value(v) for v in trace.input],
        "steps": [
            {
                "index": s.index,
                "line": s.line,
                "node": s.node,
                "pre_state": _state_json(s.pre_state),
                "post_state": _state_json(s.post_state),
                "branch": s.branch,
            }
            for s in trace.steps
        ],
        "final_output": render_value(trace.final_output) if trace.terminated else None,
        "terminated": trace.terminated,
        "verdict": trace.verdict,
    }


def trace_from_json(obj: dict[str, Any]) -> Trace:
    def state(d: dict[str, str]) -> dict[str, Any]:
        return {k: parse_literal(v) for k, v in d.items()}

    steps = [
        TraceStep(
            int(s["index"]),
            int(s["line"]),
            s.get("node"),
            state(s.get("pre_state", {})),
            state(s.get("post_state", {})),
            s.get("branch"),
        )
        for s in obj["steps"]
    ]
    terminated = bool(obj.get("terminated", obj.get("final_output") is not None))
    output = parse_output_literal(obj["final_output"]) if terminated else None
    return Trace(
        obj.get("program_id", ""),
        [parse_literal(v) for v in obj.get("input", [])],
        steps,
        output,
        terminated,
        obj.get("verdict", "unchecked"),
    )


def write_traces(path: str | Path, traces: Iterable[Trace]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(json.dumps(trace_to_json(t), sort_keys=True) + "\n")


def read_traces(path: str | Path) -> list[Trace]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(trace_from_json(json.loads(line)))
    return out
