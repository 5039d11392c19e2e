import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reasonlab.backend import Metered, MockBackend
from reasonlab.cfg import build_cfg
from reasonlab.corpus import PROGRAMS, SPECIAL_FILTER, by_name
from reasonlab.executor import SourceProgram
from reasonlab.inspector import _decision_sequence
from reasonlab.lang.oracle import oracle_trace
from reasonlab.lang.parser import parse
from reasonlab.mutator import (
    OP_NAMES,
    MutantProgram,
    MutationOp,
    MutationError,
    NotApplicable,
    append_audit,
    audit_record,
    default_variants,
    mutate_chain,
    mutate_deterministic,
    mutate_llm,
    parse_variants,
    verify_mutant,
)

NAMES = [p.name for p in PROGRAMS]


def _mutant(prog, op, seed=0):
    try:
        return mutate_deterministic(parse(prog.source), op, seed=seed, base_id=prog.name, entry=prog.entry)
    except NotApplicable:
        return None


def test_special_filter_variants_read_naturally():
    v1, v2 = default_variants(parse(SPECIAL_FILTER.source), 2, 0, entry="specialFilter")
    assert "not (current_num <= 10)" in v1.text
    assert "while " in v2.text and "for " not in v2.text
    assert v1.op_chain == "rename_vars+negate_condition"


def test_every_applicable_mutation_is_equivalent():
    applied = 0
    for prog in PROGRAMS:
        unit = parse(prog.source)
        for op in OP_NAMES:
            for seed in range(2):
                m = _mutant(prog, op, seed)
                if m is None:
                    continue
                applied += 1
                verdict = verify_mutant(unit, m, [list(a) for a in prog.inputs], prog.entry)
                assert verdict.equivalent, (prog.name, op, seed, verdict)
                assert m.correspondence.coverage == 1.0
    assert applied > 150


def test_not_applicable():
    src = "def f(x):\n    return x\n"
    with pytest.raises(NotApplicable):
        mutate_deterministic(parse(src), "for_to_while")
    with pytest.raises(ValueError):
        mutate_deterministic(parse(src), "shuffle_everything")


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(NAMES), st.sampled_from(OP_NAMES), st.integers(0, 6))
def test_same_seed_same_mutant(name, op, seed):
    prog = by_name(name)
    a, b = _mutant(prog, op, seed), _mutant(prog, op, seed)
    assert (a is None) == (b is None)
    if a is not None:
        assert a.text == b.text and a.correspondence == b.correspondence
        # the rendered text parses back to the same tree
        assert parse(a.text) == a.ast


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(NAMES), st.sampled_from(OP_NAMES))
def test_correspondence_is_sound(name, op):
    """Mapped decisions in the mutant's real run agree with the original's real run."""
    prog = by_name(name)
    m = _mutant(prog, op)
    if m is None:
        return
    base_unit = parse(prog.source)
    base_cfg = build_cfg(base_unit, prog.entry)
    mut_cfg = build_cfg(m.ast, prog.entry)
    corr = m.correspondence
    for nid, target in corr.mapping.items():
        assert nid in mut_cfg.nodes and target in base_cfg.nodes
    for args in prog.inputs:
        base = _decision_sequence(oracle_trace(base_unit, prog.entry, list(args), cfg=base_cfg))
        mut = _decision_sequence(oracle_trace(m.ast, prog.entry, list(args), cfg=mut_cfg), corr)
        for key, (decision, _) in mut.items():
            assert key in base and base[key][0] == decision, (name, op, key)


def test_chain_and_identity_fallback():
    unit = parse(by_name("gcd").source)
    ops = [MutationOp("rename_vars", 1), MutationOp("for_to_while"), MutationOp("negate_condition")]
    chained = mutate_chain(unit, ops, entry="gcd")
    # gcd has neither a for-loop nor an if, so only the renaming sticks
    assert chained.op_chain == "rename_vars:1"
    with pytest.raises(NotApplicable):
        mutate_chain(unit, ops, entry="gcd", skip_inapplicable=False)
    tiny = parse("def f():\n    return 1\n")
    variants = default_variants(tiny, 2, 0, entry="f")
    assert [v.op_chain for v in variants] == ["identity", "identity"]
    assert all(v.ast == tiny for v in variants)


def test_parse_variants_skips_junk():
    text = "Here:\n```python\ndef f(x):\n    return x + 0\n```\n```python\ndef g(:\n```\n```python\ndef h(y):\n    return y\n```"
    units = parse_variants(text, "f")
    assert len(units) == 1 and units[0].functions[0].name == "f"


def test_llm_mutation_through_the_mock():
    prog = SourceProgram("sf", SPECIAL_FILTER.source, "specialFilter")
    meter = Metered(MockBackend(mutation_seed=0))
    variants = mutate_llm(prog, meter, 2, seed=0)
    assert meter.counts["mutate"] == 1
    expected = default_variants(prog.ast, 2, 0, entry="specialFilter")
    assert [v.text for v in variants] == [v.text for v in expected]
    assert all(v.source == "reasoner" for v in variants)
    assert variants[0].correspondence == expected[0].correspondence


def test_llm_mutation_with_foreign_variant():
    class Scripted:
        name = "scripted"

        def cache_identity(self):
            return "scripted"

        def complete(self, request):
            return "```python\ndef specialFilter(nums):\n    count = 0\n    for num in nums:\n        if num > 10:\n            count += 0\n    return count\n```"

    prog = SourceProgram("sf", SPECIAL_FILTER.source, "specialFilter")
    (v,) = mutate_llm(prog, Scripted(), 2)
    assert isinstance(v, MutantProgram) and v.ops == ()
    assert v.correspondence.mapping  # shared lines are anchored
    verdict = verify_mutant(prog.ast, v, [list(a) for a in SPECIAL_FILTER.inputs], "specialFilter")
    assert not verdict.equivalent and verdict.input is not None


def test_llm_mutation_without_code_fails():
    class Chatty:
        name = "chatty"

        def cache_identity(self):
            return "chatty"

        def complete(self, request):
            return "I would rather not."

    with pytest.raises(MutationError):
        mutate_llm(SourceProgram("sf", SPECIAL_FILTER.source, "specialFilter"), Chatty(), 2)


def test_audit_log(tmp_path):
    unit = parse(SPECIAL_FILTER.source)
    m = mutate_deterministic(unit, "negate_condition", entry="specialFilter")
    rec = audit_record(m, verify_mutant(unit, m, [[[1, 11]]], "specialFilter"))
    path = tmp_path / "audit.jsonl"
    append_audit(path, [rec, rec])
    assert path.read_text().count("\n") == 2 and rec["equivalent"] is True
