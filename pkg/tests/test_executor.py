from dataclasses import replace

import pytest

from reasonlab.backend import FaultPlan, FaultSpec, Metered, MockBackend, TransportError
from reasonlab.corpus import SPECIAL_FILTER
from reasonlab.executor import SourceProgram, refine, trace_bundle, trace_once
from reasonlab.inspector import synthesize_feedback, validate_trace
from reasonlab.lang.values import ErrorMarker
from reasonlab.mutator import default_variants, mutate_deterministic

from conftest import FILTER_INPUT, MINUS_33_DECISION

PROG = SourceProgram("sf", SPECIAL_FILTER.source, "specialFilter")


def _faulty(site=MINUS_33_DECISION, text=PROG.text):
    return MockBackend(FaultPlan().with_faults(text, FILTER_INPUT, FaultSpec("wrong_branch", site, id="F")))


class Prose:
    name = "prose"

    def __init__(self):
        self.calls = 0

    def cache_identity(self):
        return "prose"

    def complete(self, request):
        self.calls += 1
        return "The function counts some numbers. I think it returns three."


class FailsOnWhile:
    """Reasoner that breaks on any program containing a while-loop."""

    name = "flaky"

    def __init__(self):
        self.inner = MockBackend()

    def cache_identity(self):
        return "flaky"

    def complete(self, request):
        if "while " in request.messages[-1]["content"]:
            raise TransportError("connection reset")
        return self.inner.complete(request)


def test_clean_trace_is_healthy():
    t = trace_once(PROG, FILTER_INPUT, MockBackend(), PROG.cfg)
    assert t.final_output == 3
    assert validate_trace(t, PROG.cfg, PROG.ast) == [] and t.verdict == "healthy"
    assert [m["role"] for m in t.messages] == ["system", "user", "assistant"]


def test_fault_shows_up_as_4():
    assert trace_once(PROG, FILTER_INPUT, _faulty()).final_output == 4


def test_prose_is_retried_once_then_marked():
    backend = Prose()
    t = trace_once(PROG, FILTER_INPUT, backend, PROG.cfg)
    assert backend.calls == 2
    assert isinstance(t.final_output, ErrorMarker) and t.final_output.kind == "unparseable_trace"
    assert t.verdict == "problematic" and not t.steps


def test_backend_errors_propagate_from_trace_once():
    backend = FailsOnWhile()
    variant = mutate_deterministic(PROG.ast, "for_to_while", entry="specialFilter")
    with pytest.raises(TransportError):
        trace_once(variant, FILTER_INPUT, backend)


def test_bundle_without_variants():
    b = trace_bundle(PROG, [], FILTER_INPUT, MockBackend())
    assert b.variants == [] and b.original.final_output == 3


def test_bundle_with_equivalent_variants():
    variants = default_variants(PROG.ast, 2, 0, entry="specialFilter")
    b = trace_bundle(PROG, variants, FILTER_INPUT, MockBackend())
    assert [t.final_output for t in b.traces] == [3, 3, 3]
    assert all(t.input == FILTER_INPUT for t in b.traces)


def test_bundle_keeps_deviant_and_failed_traces():
    variants = default_variants(PROG.ast, 2, 0, entry="specialFilter")
    b = trace_bundle(PROG, variants, FILTER_INPUT, _faulty(text=variants[0].text))
    assert [t.final_output for t in b.traces] == [3, 4, 3]
    b = trace_bundle(PROG, variants, FILTER_INPUT, FailsOnWhile())
    assert b.original.final_output == 3 and b.variants[0].final_output == 3
    assert b.variants[1].final_output.kind == "backend_error"


def test_refine_with_matching_feedback():
    backend = Metered(_faulty())
    t = trace_once(PROG, FILTER_INPUT, backend, PROG.cfg)
    fb = synthesize_feedback(validate_trace(t, PROG.cfg, PROG.ast), PROG.cfg, t)
    fixed = refine(t, fb, backend, PROG.cfg)
    assert fixed.final_output == 3
    assert backend.snapshot()["refine"] == 1
    assert fixed.messages[-2]["content"].startswith("An inspector")


def test_refine_with_unhelpful_feedback_changes_nothing():
    backend = _faulty()
    t = trace_once(PROG, FILTER_INPUT, backend, PROG.cfg)
    diags = validate_trace(t, PROG.cfg, PROG.ast)
    wrong = [replace(diags[0], node="00000000")]
    again = refine(t, synthesize_feedback(wrong, PROG.cfg, t), backend, PROG.cfg)
    assert again.final_output == 4 and len(again.steps) == len(t.steps)


def test_refine_needs_a_conversation():
    failed = trace_once(PROG, FILTER_INPUT, Prose(), PROG.cfg)
    failed.messages = []
    with pytest.raises(ValueError):
        refine(failed, None, MockBackend(), PROG.cfg)
