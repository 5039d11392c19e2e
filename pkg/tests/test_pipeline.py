import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from reasonlab.backend import BackendUnavailable, FaultPlan, FaultSpec, MockBackend, TransportError
from reasonlab.corpus import SPECIAL_FILTER, dataset_records
from reasonlab.pipeline import (
    STRATEGY_NAMES,
    Strategy,
    accuracy,
    accuracy_from_verdicts,
    cross_matrix,
    evaluate_instance,
    extract_answer,
    filter_benchmark,
    majority_output,
    read_verdicts,
    write_report,
)
from reasonlab.trace import Trace

from conftest import FILTER_INPUT, MINUS_33_DECISION

GOOD = "def f(x):\n    return x * 2\n"
ALSO_GOOD = "def f(y):\n    z = y + y\n    return z\n"


def rec(id_="i", solutions=None, tests=None, entry="f"):
    return {
        "id": id_,
        "entry_point": entry,
        "solutions": solutions or {"a": GOOD, "b": ALSO_GOOD},
        "tests": tests if tests is not None else [{"args": ["3"], "expected": "6"}],
    }


@pytest.fixture(scope="module")
def corpus_instances():
    kept, drops = filter_benchmark(dataset_records(("a", "b")))
    assert not drops
    return kept


@pytest.fixture(scope="module")
def filter_instance():
    raw = {
        "id": "specialFilter",
        "entry_point": "specialFilter",
        "solutions": {"human": SPECIAL_FILTER.source},
        "tests": [{"args": ["[71, -2, -33, 75, 21, 19]"], "expected": "3"}, {"args": ["[15, -73, 14, -15]"], "expected": "1"}],
    }
    (inst,), _ = filter_benchmark([raw])
    return inst


def _filter_fault_backend():
    plan = FaultPlan().with_faults(SPECIAL_FILTER.source, FILTER_INPUT, FaultSpec("wrong_branch", MINUS_33_DECISION))
    return MockBackend(plan)


# -- filtering ---------------------------------------------------------------------------


def test_filter_keeps_good_instances():
    kept, drops = filter_benchmark([rec()])
    assert len(kept) == 1 and drops == []
    assert kept[0].tests[0].args == (3,) and kept[0].tests[0].expected == 6


@pytest.mark.parametrize(
    "record,reason",
    [
        (rec(solutions={"a": GOOD, "b": "def f(x):\n    return x * 3\n"}), "test_failure"),
        (rec(solutions={"a": GOOD, "b": "def f(x):\n    return {x: 1}\n"}), "subset"),
        (rec(solutions={"a": GOOD, "b": "def f(x:\n"}), "parse"),
        (rec(solutions={"a": "def g(x):\n    return x\n"}), "missing_entry"),
        (rec(tests=[{"args": ["[1,"], "expected": "1"}]), "malformed"),
        (rec(tests=[]), "no_tests"),
        (rec(tests=[{"args": ["1", "2"], "expected": "2"}]), "test_failure"),
    ],
)
def test_filter_drop_reasons(record, reason):
    kept, drops = filter_benchmark([record])
    assert kept == [] and [d.reason for d in drops] == [reason]


def test_filter_requires_listed_origins():
    _, drops = filter_benchmark([rec()], origins=["a", "c"])
    assert drops[0].reason == "missing_origin" and drops[0].origin == "c"


def test_filter_caps_tests_after_checking_all():
    tests = [{"args": [str(i)], "expected": str(2 * i)} for i in range(20)]
    (inst,), _ = filter_benchmark([rec(tests=tests)])
    assert [t.args[0] for t in inst.tests] == list(range(15))
    tests[18]["expected"] = "0"
    kept, drops = filter_benchmark([rec(tests=tests)])
    assert not kept and "test 18" in drops[0].detail


def test_filter_is_idempotent(corpus_instances):
    again, drops = filter_benchmark(corpus_instances)
    assert drops == [] and again == corpus_instances


def test_native_json_arguments():
    (inst,), _ = filter_benchmark([rec(tests=[{"args": [4], "expected": 8}])])
    assert inst.tests[0].args == (4,)
    (inst,), _ = filter_benchmark([rec(tests=[{"args": "[5]", "expected": "10"}])])
    assert inst.tests[0].args == (5,)


# -- answers ---------------------------------------------------------------------------


def test_extract_answer():
    assert extract_answer("blah\nOUTPUT 1\nso...\nOUTPUT [2, 3]\n") == [2, 3]
    assert extract_answer("nothing here").kind == "no_answer"


def test_majority_ties_go_to_the_original():
    t = lambda out: Trace("p", [], [object()], out, True)  # noqa: E731
    assert majority_output([t(4), t(3), t(3)]) == 3
    assert majority_output([t(3), t(4), t(5)]) == 3
    assert majority_output([t(4), t(3)]) == 4


# -- evaluate_instance --------------------------------------------------------------------


def test_clean_remind(filter_instance):
    res = evaluate_instance(filter_instance, "human", Strategy("remind"), MockBackend())
    assert res.passed and all(v.rounds == 0 for v in res.verdicts)
    assert res.total_calls == 1 + 3 * len(filter_instance.tests)


def test_case_study(filter_instance):
    backend = _filter_fault_backend()
    cot = evaluate_instance(filter_instance, "human", Strategy("cot"), backend)
    assert cot.verdicts[0].predicted == 4 and not cot.passed
    remind = evaluate_instance(filter_instance, "human", Strategy("remind"), backend)
    assert remind.verdicts[0].predicted == 3 and remind.verdicts[0].rounds == 1 and remind.passed
    assert remind.total_calls <= Strategy("remind").call_ceiling(len(filter_instance.tests))
    assert remind.calls["refine"] == 1


def test_vote_outnumbers_a_lone_slip(filter_instance):
    backend = _filter_fault_backend()
    assert evaluate_instance(filter_instance, "human", Strategy("mutation_vote"), backend).passed


def test_no_mutator_still_refines(filter_instance):
    res = evaluate_instance(filter_instance, "human", Strategy("remind_no_mutator"), _filter_fault_backend())
    assert res.passed and res.calls["mutate"] == 0 and res.total_calls == 2 + 1


def test_backend_failure_marks_tests_wrong(filter_instance):
    class Down:
        name = "down"

        def cache_identity(self):
            return "down"

        def complete(self, request):
            raise TransportError("unreachable")

    for name in STRATEGY_NAMES:
        res = evaluate_instance(filter_instance, "human", Strategy(name), Down())
        assert not any(v.correct for v in res.verdicts)


@pytest.mark.parametrize("strategy", [Strategy("remind", 0, 0), Strategy("mutation_vote", 0), Strategy("remind_no_inspector", 0)])
def test_degenerate_strategies_match_cot(corpus_instances, strategy):
    from reasonlab.backend import seeded_fault_plan

    backend = MockBackend(seeded_fault_plan(corpus_instances, 0.5, seed=5))
    for inst in corpus_instances[:18]:
        cot = evaluate_instance(inst, "a", Strategy("cot"), backend)
        other = evaluate_instance(inst, "a", strategy, backend)
        assert [v.predicted for v in cot.verdicts] == [v.predicted for v in other.verdicts]


def test_strategy_validation():
    with pytest.raises(ValueError):
        Strategy("vibes")
    with pytest.raises(ValueError):
        Strategy("remind", k=-1)
    assert Strategy("remind").call_ceiling(4) == 1 + 3 * 4 + 2 * 4


# -- the metric -----------------------------------------------------------------------------


def test_accuracy_examples():
    assert accuracy([[True] * 3] * 5) == 1.0
    assert accuracy([[True] * 5, [True] * 5, [True, True, False, True, True], [True]]) == 0.75


def _brute_force(matrix):
    total = Fraction(0)
    for row in matrix:
        prod = 1
        for v in row:
            prod *= 1 if v else 0
        total += prod
    return total / len(matrix)


@given(st.lists(st.lists(st.booleans(), min_size=1, max_size=15), min_size=1, max_size=40))
def test_accuracy_matches_brute_force(matrix):
    assert accuracy(matrix) == float(_brute_force(matrix))


# -- grids -------------------------------------------------------------------------------------


def test_clean_grid(corpus_instances):
    report = cross_matrix(corpus_instances[:6], ["a", "b"], [Strategy("remind")], {"mock": MockBackend()})
    assert set(report.accuracy_grid().values()) == {1.0}
    assert report.std() == {("mock", "remind"): 0.0}


def test_origin_specific_faults(corpus_instances):
    subset = corpus_instances[:10]
    plan = FaultPlan()
    from reasonlab.backend.mock import output_changing_sites

    for inst in subset:
        prog = inst.solutions["b"]
        sites = output_changing_sites(prog.ast, inst.entry_point, inst.tests[0].args)
        if sites:
            plan = plan.with_faults(prog.text, inst.tests[0].args, FaultSpec("wrong_branch", sites[0]))
    report = cross_matrix(subset, ["a", "b"], [Strategy("cot")], {"mock": MockBackend(plan)})
    grid = report.accuracy_grid()
    assert grid[("mock", "b", "cot")] < grid[("mock", "a", "cot")] == 1.0
    assert report.std()[("mock", "cot")] > 0


def test_empty_strategies():
    report = cross_matrix([], ["a"], [], {"mock": MockBackend()})
    assert report.results == [] and report.accuracy_grid() == {}


def test_unavailable_backend_is_a_gap(corpus_instances):
    def missing():
        raise BackendUnavailable("no key")

    report = cross_matrix(corpus_instances[:3], ["a"], [Strategy("cot")], {"mock": MockBackend(), "live": missing})
    grid = report.accuracy_grid()
    assert grid[("live", "a", "cot")] is None and grid[("mock", "a", "cot")] == 1.0


def test_grid_is_order_independent_and_reproducible(corpus_instances, tmp_path):
    from reasonlab.backend import seeded_fault_plan

    plan = seeded_fault_plan(corpus_instances, 0.4, seed=2)
    strategies = [Strategy("cot"), Strategy("remind")]
    shuffled = list(corpus_instances)
    random.Random(0).shuffle(shuffled)
    one = cross_matrix(corpus_instances, ["a", "b"], strategies, {"mock": MockBackend(plan)}, workers=1)
    many = cross_matrix(shuffled, ["a", "b"], strategies, {"mock": MockBackend(plan)}, workers=4)
    assert one.accuracy_grid() == many.accuracy_grid()
    write_report(one, tmp_path / "x")
    write_report(cross_matrix(corpus_instances, ["a", "b"], strategies, {"mock": MockBackend(plan)}, workers=3), tmp_path / "y")
    for name in ("verdicts.jsonl", "accuracy.csv", "std.csv", "heatmap.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
    # accuracy recomputed from raw verdict rows equals the report
    recomputed = accuracy_from_verdicts(read_verdicts(tmp_path / "x" / "verdicts.jsonl"))
    assert recomputed == {k: v for k, v in one.accuracy_grid().items()}
    for r in one.results:
        inst = next(i for i in corpus_instances if i.id == r.instance_id)
        assert r.total_calls <= Strategy(r.strategy).call_ceiling(len(inst.tests))


def test_heatmap_relative_to_diagonal(corpus_instances, tmp_path):
    subset = corpus_instances[:4]
    plan = FaultPlan()
    inst = subset[0]
    from reasonlab.backend.mock import output_changing_sites

    prog = inst.solutions["b"]
    for t in inst.tests:
        sites = output_changing_sites(prog.ast, inst.entry_point, t.args)
        if sites:
            plan = plan.with_faults(prog.text, t.args, FaultSpec("wrong_branch", sites[0]))
    report = cross_matrix(subset, ["a", "b"], [Strategy("cot")], {"a": MockBackend(plan)})
    heat = report.heatmap()
    assert heat[("a", "a", "cot")] == 1.0 and heat[("a", "b", "cot")] == 0.75
    paths = write_report(report, tmp_path)
    assert paths["heatmap.csv"].read_text().splitlines()[1] == "cot,a,1.000000,0.750000"
