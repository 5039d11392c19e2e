import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reasonlab.corpus import PROGRAMS
from reasonlab.cfg import build_cfg
from reasonlab.lang.oracle import oracle_trace
from reasonlab.lang.parser import parse
from reasonlab.lang.values import ErrorMarker
from reasonlab.trace import (
    Trace,
    parse_trace_text,
    read_traces,
    render_trace,
    traces_equivalent,
    write_traces,
)

from conftest import FILTER_INPUT

INC = "def f(x):\n    y = x + 1\n    return y\n"


def test_prose_and_markdown_are_tolerated():
    cfg = build_cfg(parse(INC), "f")
    text = """Sure! Let me trace it.

**STEP 1 | LINE 2 | STATE x=1, y=2**
- STEP 2 | LINE 3 | STATE y=2
That is the end.
`OUTPUT 2`
"""
    report = parse_trace_text(text, cfg, [1])
    assert report.fatal is None
    t = report.trace
    assert [s.line for s in t.steps] == [2, 3]
    assert t.final_output == 2
    assert report.ignored_lines == 3


def test_state_carries_over():
    cfg = build_cfg(parse(INC), "f")
    t = parse_trace_text("STEP 1 | LINE 2 | STATE y=2\nSTEP 2 | LINE 3 | STATE\nOUTPUT 2\n", cfg, [1]).trace
    assert t.steps[0].pre_state == {"x": 1}
    assert t.steps[1].post_state == {"x": 1, "y": 2}


def test_last_block_wins():
    cfg = build_cfg(parse(INC), "f")
    text = (
        "STEP 1 | LINE 2 | STATE y=5\nSTEP 2 | LINE 3 | STATE y=5\nOUTPUT 5\n"
        "Wait, I made a mistake.\n"
        "STEP 1 | LINE 2 | STATE y=2\nSTEP 2 | LINE 3 | STATE y=2\nOUTPUT 2\n"
    )
    assert parse_trace_text(text, cfg, [1]).trace.final_output == 2


def test_fatal_reasons():
    cfg = build_cfg(parse(INC), "f")
    assert parse_trace_text("just prose", cfg, [1]).fatal == "no OUTPUT line"
    assert parse_trace_text("OUTPUT 3", cfg, [1]).fatal == "zero parseable steps"


def test_non_monotone_indices_are_renumbered():
    cfg = build_cfg(parse(INC), "f")
    report = parse_trace_text("STEP 4 | LINE 2 | STATE y=2\nSTEP 2 | LINE 3 | STATE\nOUTPUT 2", cfg, [1])
    assert report.warnings == 1
    assert [s.index for s in report.trace.steps] == [1, 2]


def test_error_output():
    cfg = build_cfg(parse(INC), "f")
    t = parse_trace_text("STEP 1 | LINE 2 | STATE\nOUTPUT <error type_error: bad operand>", cfg, ["a"]).trace
    assert t.final_output == ErrorMarker("type_error", "bad operand")
    assert t.is_error


def test_unknown_line_is_unmapped():
    cfg = build_cfg(parse(INC), "f")
    t = parse_trace_text("STEP 1 | LINE 40 | STATE y=2\nOUTPUT 2", cfg, [1]).trace
    assert t.steps[0].node is None


def test_verdict_transitions():
    t = Trace("p", [], [], None)
    t.set_verdict("healthy")
    with pytest.raises(ValueError):
        t.set_verdict("problematic")
    with pytest.raises(ValueError):
        Trace("p", [], [], None).set_verdict("unchecked")


def test_render_refuses_incomplete_traces():
    with pytest.raises(ValueError):
        render_trace(Trace("p", [], [], 1, True))


def test_oracle_traces_round_trip(tmp_path):
    """Rendering then parsing an oracle trace gives the same trace for every corpus case."""
    stored = []
    for prog in PROGRAMS:
        unit = parse(prog.source)
        cfg = build_cfg(unit, prog.entry)
        for args in prog.inputs:
            t = oracle_trace(unit, prog.entry, list(args), cfg=cfg, program_id=prog.name)
            back = parse_trace_text(render_trace(t), cfg, list(args), prog.name).trace
            assert traces_equivalent(t, back), (prog.name, args)
            stored.append(t)
    path = tmp_path / "traces.jsonl"
    write_traces(path, stored)
    loaded = read_traces(path)
    assert len(loaded) == len(stored)
    assert all(traces_equivalent(a, b) for a, b in zip(stored, loaded))


def test_special_filter_oracle(special_filter):
    prog, unit, cfg = special_filter
    t = oracle_trace(unit, prog.entry, FILTER_INPUT, cfg=cfg)
    assert t.final_output == 3
    minus33 = [s for s in t.steps if s.line == 4 and s.pre_state.get("num") == -33]
    assert len(minus33) == 1 and minus33[0].branch is False


protocolish = st.lists(
    st.one_of(
        st.text(max_size=30),
        st.builds(
            lambda k, line, junk: f"STEP {k} | LINE {line} | STATE {junk}",
            st.integers(-3, 50),
            st.integers(0, 12),
            st.text(max_size=20),
        ),
        st.builds(lambda v: f"OUTPUT {v}", st.text(max_size=10)),
        st.just("STEP 1 | LINE 4 | STATE num=-33 | BRANCH true"),
    ),
    max_size=12,
)


FUZZ_CFG = build_cfg(parse(PROGRAMS[0].source), PROGRAMS[0].entry)


@settings(max_examples=300)
@given(protocolish)
def test_parser_never_raises(lines):
    report = parse_trace_text("\n".join(lines), FUZZ_CFG, None)
    assert (report.trace is None) == (report.fatal is not None)
    if report.trace is not None:
        assert [s.index for s in report.trace.steps] == sorted({s.index for s in report.trace.steps})
