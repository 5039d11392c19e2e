from reasonlab.backend.mock import FaultSpec, faulty_trace
from reasonlab.cfg import build_cfg
from reasonlab.corpus import PROGRAMS
from reasonlab.executor import TraceBundle
from reasonlab.inspector import cross_check, synthesize_feedback, validate_trace
from reasonlab.lang.interp import Tracer, run_traced
from reasonlab.lang.oracle import oracle_trace
from reasonlab.lang.parser import parse
from reasonlab.lang.values import outputs_equal
from reasonlab.mutator import default_variants
from reasonlab.trace import Trace, parse_trace_text, render_trace

from conftest import FILTER_INPUT, MINUS_33_DECISION

MSAS_INPUT = [[100, -33, 32, -1, 0, -2]]


def _edit(text, step, new_line):
    lines = text.splitlines()
    lines[step - 1] = new_line
    return "\n".join(lines) + "\n"


def test_oracle_traces_are_healthy():
    for prog in PROGRAMS:
        unit = parse(prog.source)
        cfg = build_cfg(unit, prog.entry)
        for args in prog.inputs:
            t = oracle_trace(unit, prog.entry, list(args), cfg=cfg)
            assert validate_trace(t, cfg, unit) == [], (prog.name, args)
            assert t.verdict == "healthy"


def test_flipped_minus_33_branch(special_filter):
    prog, unit, cfg = special_filter
    run = faulty_trace(unit, prog.entry, FILTER_INPUT, [FaultSpec("wrong_branch", MINUS_33_DECISION, id="F")])
    assert run.trace.final_output == 4
    diags = validate_trace(run.trace, cfg, unit)
    step, node = run.manifest["F"]
    first = diags[0]
    assert (first.kind, first.step, first.node) == ("condition_mismatch", step, node)
    assert cfg.nodes[node].label == "if num > 10:"
    assert first.condition_value is False and first.decision is True
    assert run.trace.verdict == "problematic"
    # validating again changes nothing
    assert validate_trace(run.trace, cfg, unit) == diags


def test_condition_recorded_false_against_inf(min_sub_array):
    prog, unit, cfg = min_sub_array
    text = render_trace(oracle_trace(unit, prog.entry, MSAS_INPUT, cfg=cfg))
    lines = text.splitlines()
    # "100 < inf" claimed false: skip the update and go straight back to the loop head
    doctored = lines[:4] + [lines[4].replace("BRANCH true", "BRANCH false")]
    doctored += [
        "STEP 6 | LINE 4 | STATE num=-33 | BRANCH true",
        "OUTPUT -33",
    ]
    t = parse_trace_text("\n".join(doctored), cfg, MSAS_INPUT).trace
    diags = validate_trace(t, cfg, unit)
    assert diags[0].kind == "condition_mismatch" and diags[0].step == 5
    assert diags[0].condition_value is True


def test_update_to_minus_4(min_sub_array):
    prog, unit, cfg = min_sub_array
    text = render_trace(oracle_trace(unit, prog.entry, MSAS_INPUT, cfg=cfg))
    lines = text.splitlines()
    doctored = lines[:21] + [
        lines[21].replace("BRANCH false", "BRANCH true"),
        "STEP 23 | LINE 7 | STATE min_sum=-4",
        "STEP 24 | LINE 4 | STATE | BRANCH false",
        "STEP 25 | LINE 8 | STATE",
        "OUTPUT -4",
    ]
    t = parse_trace_text("\n".join(doctored), cfg, MSAS_INPUT).trace
    diags = validate_trace(t, cfg, unit)
    assert diags[0].kind == "condition_mismatch" and diags[0].step == 22


def test_wrong_state_is_a_state_mismatch(special_filter):
    prog, unit, cfg = special_filter
    text = render_trace(oracle_trace(unit, prog.entry, FILTER_INPUT, cfg=cfg))
    t = parse_trace_text(_edit(text, 8, "STEP 8 | LINE 9 | STATE count=5"), cfg, FILTER_INPUT).trace
    diags = validate_trace(t, cfg, unit)
    assert diags[0].kind == "state_mismatch" and diags[0].step == 8
    fb = synthesize_feedback(diags, cfg, t)
    assert "count" in fb.suggestion and "1" in fb.suggestion


def test_infeasible_jump(special_filter):
    prog, unit, cfg = special_filter
    text = "STEP 1 | LINE 2 | STATE count=0\nSTEP 2 | LINE 9 | STATE count=1\nSTEP 3 | LINE 10 | STATE\nOUTPUT 1\n"
    diags = validate_trace(parse_trace_text(text, cfg, FILTER_INPUT).trace, cfg, unit)
    assert diags[0].kind == "infeasible_edge" and diags[0].step == 2


def test_wrong_output(special_filter):
    prog, unit, cfg = special_filter
    text = render_trace(oracle_trace(unit, prog.entry, [[]], cfg=cfg)).replace("OUTPUT 0", "OUTPUT 7")
    diags = validate_trace(parse_trace_text(text, cfg, [[]]).trace, cfg, unit)
    assert [d.kind for d in diags] == ["output_mismatch"]


def test_missing_state_is_undecidable_not_wrong(special_filter):
    _, unit, cfg = special_filter
    text = "STEP 1 | LINE 2 | STATE count=0\nSTEP 2 | LINE 4 | STATE | BRANCH true\nOUTPUT 0\n"
    from reasonlab.inspector import inspect_trace

    t = parse_trace_text(text, cfg, FILTER_INPUT).trace
    result = inspect_trace(t, cfg, unit)
    assert 2 in result.undecidable_steps
    assert all(d.kind != "condition_mismatch" for d in result.diagnoses)


def test_every_branch_occurrence_is_caught():
    checked = 0
    for prog in PROGRAMS:
        unit = parse(prog.source)
        cfg = build_cfg(unit, prog.entry)
        for args in prog.inputs:
            tracer = Tracer()
            run_traced(unit, prog.entry, list(args), tracer=tracer)
            for site in range(1, tracer.occurrences + 1):
                run = faulty_trace(unit, prog.entry, list(args), [FaultSpec("wrong_branch", site, id="F")])
                diags = validate_trace(run.trace, cfg, unit)
                step, node = run.manifest["F"]
                assert diags and (diags[0].kind, diags[0].step, diags[0].node) == ("condition_mismatch", step, node)
                checked += 1
    assert checked > 200


def _bundle(special_filter, faults_per_trace):
    prog, unit, cfg = special_filter
    variants = default_variants(unit, 2, 0, entry=prog.entry)
    traces = []
    units = [unit] + [v.ast for v in variants]
    for u, faults in zip(units, faults_per_trace):
        traces.append(faulty_trace(u, prog.entry, FILTER_INPUT, faults).trace)
    return TraceBundle(FILTER_INPUT, traces[0], traces[1:]), [v.correspondence for v in variants]


def test_cross_check_agreement(special_filter):
    bundle, corr = _bundle(special_filter, [(), (), ()])
    assert cross_check(bundle, corr) == []


def test_cross_check_points_at_the_minus_33_branch(special_filter):
    _, _, cfg = special_filter
    fault = FaultSpec("wrong_branch", MINUS_33_DECISION, id="F")
    bundle, corr = _bundle(special_filter, [(fault,), (), ()])
    (d,) = cross_check(bundle, corr)
    assert d.kind == "cross_variant_disagreement"
    assert "minority original" in d.detail
    assert cfg.nodes[d.node].label == "if num > 10:" and d.step == 12


def test_cross_check_tie():
    base = Trace("p", [], [], 3, True)
    bundle = TraceBundle([], base, [Trace("p", [], [], 4, True), Trace("p", [], [], 5, True)])
    (d,) = cross_check(bundle)
    assert "no majority" in d.detail


def test_feedback_for_the_case_study(special_filter):
    prog, unit, cfg = special_filter
    run = faulty_trace(unit, prog.entry, FILTER_INPUT, [FaultSpec("wrong_branch", MINUS_33_DECISION, id="F")])
    diags = validate_trace(run.trace, cfg, unit)
    fb = synthesize_feedback(diags, cfg, run.trace)
    text = fb.render()
    assert text.splitlines()[0] == f"FOCUS STEP {diags[0].step} | NODE {diags[0].node} | KIND condition_mismatch"
    assert "num > 10 is False" in fb.suggestion and "num = -33" in fb.suggestion
    assert "take the false edge" in fb.suggestion and "skipping lines 5-9" in fb.suggestion
    # the named edge exists with the stated kind
    assert fb.edge in cfg.edges and fb.edge.kind == "false" and fb.edge.src == diags[0].node


def test_feedback_lists_later_findings_as_context(special_filter):
    prog, unit, cfg = special_filter
    faults = [FaultSpec("wrong_branch", MINUS_33_DECISION, id="A"), FaultSpec("value_perturb", 37, 5, id="B")]
    run = faulty_trace(unit, prog.entry, FILTER_INPUT, faults)
    diags = validate_trace(run.trace, cfg, unit)
    assert len(diags) >= 2
    fb = synthesize_feedback(diags, cfg, run.trace)
    assert fb.focus.step == min(d.step for d in diags)
    assert "Other findings" in fb.render()


def test_guidance_edges_exist_for_all_detected_faults():
    for prog in PROGRAMS[:12]:
        unit = parse(prog.source)
        cfg = build_cfg(unit, prog.entry)
        args = list(prog.inputs[0])
        tracer = Tracer()
        run_traced(unit, prog.entry, args, tracer=tracer)
        for site in range(1, min(tracer.occurrences, 10) + 1):
            run = faulty_trace(unit, prog.entry, args, [FaultSpec("wrong_branch", site, id="F")])
            fb = synthesize_feedback(validate_trace(run.trace, cfg, unit), cfg, run.trace)
            assert fb.edge is not None and fb.edge in cfg.edges


def test_stale_updates_that_matter_are_flagged_early():
    flagged = relevant = 0
    for prog in PROGRAMS:
        unit = parse(prog.source)
        cfg = build_cfg(unit, prog.entry)
        for args in prog.inputs:
            clean = oracle_trace(unit, prog.entry, list(args), cfg=cfg)
            for step in clean.steps:
                if cfg.nodes[step.node].kind != "statement":
                    continue
                run = faulty_trace(unit, prog.entry, list(args), [FaultSpec("stale_update", step.index, id="S")])
                if "S" not in run.manifest or outputs_equal(run.trace.final_output, clean.final_output):
                    continue
                relevant += 1
                diags = validate_trace(run.trace, cfg, unit)
                assert diags and diags[0].kind == "state_mismatch" and diags[0].step <= step.index
                flagged += 1
    assert relevant > 20 and flagged == relevant
