"""Benchmark filtering, per-instance strategy runs, the all-tests metric and experiment grids."""

from __future__ import annotations

import csv
import json
import logging
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

from .backend.base import Backend, BackendError, BackendUnavailable, Metered
from .backend.prompts import cot_request
from .executor import SourceProgram, TraceBundle, refine, trace_bundle
from .inspector import cross_check, synthesize_feedback, validate_trace
from .lang.interp import DEFAULT_BUDGET, run_program
from .lang.parser import SubjectSyntaxError
from .lang.values import ErrorMarker, LiteralError, outputs_equal, parse_literal, render_value
from .mutator import MutantProgram, MutationError, mutate_llm, same_result
from .trace import OUTPUT_RE, Trace, parse_output_literal

log = logging.getLogger(__name__)

MAX_TESTS = 15
STRATEGY_NAMES = ("cot", "mutation_vote", "remind", "remind_no_mutator", "remind_no_inspector")


# -- data model ----------------------------------------------------------------


@dataclass(frozen=True)
class TestCase:
    args: tuple[Any, ...]
    expected: Any

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class Instance:
    id: str
    entry_point: str
    solutions: Mapping[str, SourceProgram]
    tests: tuple[TestCase, ...]
    task: str = ""

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "id": self.id,
            "entry_point": self.entry_point,
            "solutions": {o: p.text for o, p in self.solutions.items()},
            "tests": [{"args": [render_value(a) for a in t.args], "expected": render_value(t.expected)} for t in self.tests],
        }
        if self.task:
            rec["task"] = self.task
        return rec


@dataclass(frozen=True)
class Strategy:
    name: str
    k: int = 2
    rounds: int = 2

    def __post_init__(self) -> None:
        if self.name not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.name!r}; choose from {', '.join(STRATEGY_NAMES)}")
        if self.k < 0 or self.rounds < 0:
            raise ValueError("k and rounds must be non-negative")

    @property
    def uses_mutator(self) -> bool:
        return self.name in ("mutation_vote", "remind", "remind_no_inspector") and self.k > 0

    @property
    def uses_inspector(self) -> bool:
        return self.name in ("remind", "remind_no_mutator")

    def call_ceiling(self, tests: int) -> int:
        """Most backend calls one instance may use when every reply parses."""
        if self.name == "cot":
            return tests
        k = self.k if self.uses_mutator else 0
        r = self.rounds if self.uses_inspector else 0
        return (1 if self.uses_mutator else 0) + (1 + k) * tests + r * tests


@dataclass(frozen=True)
class TestVerdict:
    index: int
    args: tuple[Any, ...]
    expected: Any
    predicted: Any
    correct: bool
    rounds: int = 0
    open_diagnoses: int = 0

    __test__ = False


@dataclass
class InstanceResult:
    instance_id: str
    origin: str
    strategy: str
    backend: str
    verdicts: list[TestVerdict]
    calls: dict[str, int] = field(default_factory=dict)
    note: str = ""
    bundles: list[TraceBundle] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(v.correct for v in self.verdicts)

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())


@dataclass(frozen=True)
class Drop:
    instance_id: str
    reason: str
    origin: str = ""
    detail: str = ""

    def to_json(self) -> dict[str, str]:
        return {"id": self.instance_id, "reason": self.reason, "origin": self.origin, "detail": self.detail}


class DatasetError(Exception):
    pass


# -- dataset IO -----------------------------------------------------------------


def _value(raw: Any) -> Any:
    # Strings are literal text in the subject syntax; other JSON values are taken as-is.
    return parse_literal(raw) if isinstance(raw, str) else raw


def _args(raw: Any) -> tuple[Any, ...]:
    if isinstance(raw, str):
        v = parse_literal(raw)
        if not isinstance(v, list):
            raise LiteralError("args literal must be a list", 0)
        return tuple(v)
    if not isinstance(raw, list):
        raise LiteralError("args must be a list", 0)
    return tuple(_value(a) for a in raw)


def load_dataset(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{path}:{lineno}: {err.msg}") from None
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{lineno}: expected a JSON object")
            records.append(rec)
    return records


def write_dataset(path: str | Path, instances: Iterable[Instance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), sort_keys=True) + "\n")


# -- filtering --------------------------------------------------------------------


def _as_record(item: Union[Mapping[str, Any], Instance]) -> Mapping[str, Any]:
    return item.to_record() if isinstance(item, Instance) else item


def _check_origin(
    rid: str, entry: str, origin: str, text: Any, tests: Sequence[TestCase], budget: int
) -> Optional[Drop]:
    if not isinstance(text, str):
        return Drop(rid, "missing_origin", origin, "no solution text")
    prog = SourceProgram(f"{rid}/{origin}", text, entry, origin)
    try:
        unit = prog.ast
    except SubjectSyntaxError as err:
        return Drop(rid, "subset" if err.kind == "subset" else "parse", origin, str(err))
    if not unit.has_function(entry):
        return Drop(rid, "missing_entry", origin, f"no function named {entry!r}")
    for j, test in enumerate(tests):
        try:
            out = run_program(unit, entry, list(test.args), budget)
        except ValueError as err:  # arity mismatch
            return Drop(rid, "test_failure", origin, f"test {j}: {err}")
        if not out.ok or not outputs_equal(test.expected, out.output):
            got = render_value(out.output)
            return Drop(rid, "test_failure", origin, f"test {j}: expected {render_value(test.expected)}, got {got}")
    return None


def filter_benchmark(
    raw: Iterable[Union[Mapping[str, Any], Instance]],
    origins: Optional[Sequence[str]] = None,
    budget: int = DEFAULT_BUDGET,
    max_tests: int = MAX_TESTS,
) -> tuple[list[Instance], list[Drop]]:
    """Keep instances whose every origin parses in the subset and passes every test.

    All tests are checked; the survivors keep only the first ``max_tests``.
    ``origins`` restricts (and requires) the listed solution origins.
    """
    kept: list[Instance] = []
    drops: list[Drop] = []
    for item in raw:
        rec = _as_record(item)
        rid = str(rec.get("id", f"#{len(kept) + len(drops)}"))
        entry = rec.get("entry_point")
        solutions = rec.get("solutions")
        if not isinstance(entry, str) or not isinstance(solutions, Mapping):
            drops.append(Drop(rid, "malformed", "", "record needs entry_point and solutions"))
            continue
        try:
            tests = tuple(TestCase(_args(t["args"]), _value(t["expected"])) for t in rec.get("tests", []))
        except (LiteralError, KeyError, TypeError, RecursionError) as err:
            drops.append(Drop(rid, "malformed", "", f"bad test literal: {err}"))
            continue
        if not tests:
            drops.append(Drop(rid, "no_tests"))
            continue
        wanted = list(origins) if origins is not None else sorted(solutions)
        if not wanted:
            drops.append(Drop(rid, "missing_origin", "", "no solutions"))
            continue
        drop = None
        for origin in wanted:
            drop = _check_origin(rid, entry, origin, solutions.get(origin), tests, budget)
            if drop:
                break
        if drop:
            drops.append(drop)
            continue
        sols = {o: SourceProgram(f"{rid}/{o}", solutions[o], entry, o) for o in wanted}
        kept.append(Instance(rid, entry, sols, tests[:max_tests], str(rec.get("task", ""))))
    return kept, drops


# -- answering ----------------------------------------------------------------------


def extract_answer(reply: str) -> Any:
    """The value on the last OUTPUT line of a free-form answer."""
    for line in reversed(str(reply).splitlines()):
        m = OUTPUT_RE.match(line)
        if m and m.group(1):
            try:
                return parse_output_literal(m.group(1))
            except (LiteralError, RecursionError):
                continue
    return ErrorMarker("no_answer", "reply has no OUTPUT line")


def majority_output(traces: Sequence[Trace]) -> Any:
    """Most common final output among usable traces; ties go to the first trace (the original)."""
    usable = [t for t in traces if t.steps] or list(traces[:1])
    groups: list[list[Trace]] = []
    for t in usable:
        for g in groups:
            if same_result(g[0].final_output, t.final_output):
                g.append(t)
                break
        else:
            groups.append([t])
    sizes = sorted((len(g) for g in groups), reverse=True)
    if len(sizes) > 1 and sizes[0] == sizes[1]:
        return traces[0].final_output
    return max(groups, key=len)[0].final_output


def _cfg_for(p: SourceProgram | MutantProgram):
    from .cfg import build_cfg

    return p.cfg if isinstance(p, SourceProgram) else build_cfg(p.ast, p.entry)


def _is_healthy(trace: Trace, prog: SourceProgram | MutantProgram, cfg) -> bool:
    if not trace.steps:
        return False
    return not validate_trace(trace, cfg, prog.ast)


def _remind(
    prog: SourceProgram,
    variants: Sequence[MutantProgram],
    vcfgs: Sequence[Any],
    bundle: TraceBundle,
    rounds: int,
    backend: Backend,
) -> tuple[Any, int, int]:
    original = bundle.original
    diags = validate_trace(original, prog.cfg, prog.ast) if original.steps else []
    healthy = [i for i, t in enumerate(bundle.variants) if _is_healthy(t, variants[i], vcfgs[i])]
    used = 0
    while original.steps:
        problems = diags
        if not problems and healthy:
            sub = TraceBundle(bundle.input, original, [bundle.variants[i] for i in healthy])
            problems = cross_check(sub, [variants[i].correspondence for i in healthy])
        if not problems or used >= rounds:
            break
        feedback = synthesize_feedback(problems, prog.cfg, original)
        try:
            revised = refine(original, feedback, backend, prog.cfg)
        except BackendError as err:
            log.warning("%s: refinement failed: %s", prog.id, err)
            break
        used += 1
        bundle.rounds = used
        if not revised.steps:
            continue  # an unusable revision leaves the previous trace standing
        original = revised
        diags = validate_trace(original, prog.cfg, prog.ast)
    bundle.original = original
    if not original.steps or diags:
        return original.final_output, used, len(diags)
    return majority_output([original] + [bundle.variants[i] for i in healthy]), used, 0


def evaluate_instance(
    instance: Instance,
    origin: str,
    strategy: Strategy,
    backend: Backend,
    seed: int = 0,
    keep_bundles: bool = False,
) -> InstanceResult:
    """Run one strategy over every test of one instance.

    Backend failures make the affected tests wrong; they never raise.
    With ``keep_bundles`` the trace bundles (and their conversations) stay on
    the result for auditing.
    """
    bundles: list[TraceBundle] = []
    meter = Metered(backend)
    prog = instance.solutions[origin]
    note = ""
    variants: list[MutantProgram] = []
    if strategy.uses_mutator:
        try:
            variants = mutate_llm(prog, meter, strategy.k, seed)
        except (MutationError, BackendError) as err:
            note = f"mutation failed: {err}"
    vcfgs = [_cfg_for(v) for v in variants]
    verdicts = []
    for j, test in enumerate(instance.tests):
        rounds = open_diags = 0
        try:
            if strategy.name == "cot":
                predicted = extract_answer(meter.complete(cot_request(prog.text, prog.entry_point, test.args)))
            else:
                bundle = trace_bundle(prog, variants, test.args, meter, [prog.cfg, *vcfgs])
                if strategy.uses_inspector:
                    predicted, rounds, open_diags = _remind(prog, variants, vcfgs, bundle, strategy.rounds, meter)
                else:
                    predicted = majority_output(bundle.traces)
                if keep_bundles:
                    bundles.append(bundle)
        except BackendError as err:
            predicted = ErrorMarker("backend_error", str(err))
        correct = not isinstance(predicted, ErrorMarker) and outputs_equal(test.expected, predicted)
        verdicts.append(TestVerdict(j, test.args, test.expected, predicted, correct, rounds, open_diags))
    return InstanceResult(instance.id, origin, strategy.name, backend.name, verdicts, meter.snapshot(), note, bundles)


# -- the metric -----------------------------------------------------------------------


def accuracy(verdicts: Sequence[Union[InstanceResult, Sequence[bool]]]) -> float:
    """Share of instances whose every test verdict is correct."""
    if not verdicts:
        return 0.0
    passed = 0
    for row in verdicts:
        ok = row.passed if isinstance(row, InstanceResult) else all(bool(v) for v in row)
        passed += ok
    return passed / len(verdicts)


# -- grids ------------------------------------------------------------------------------

BackendSource = Union[Backend, Callable[[], Backend]]


@dataclass
class RunReport:
    backends: list[str]
    origins: list[str]
    strategies: list[str]
    results: list[InstanceResult] = field(default_factory=list)
    gaps: set[str] = field(default_factory=set)

    def cell(self, backend: str, origin: str, strategy: str) -> list[InstanceResult]:
        return [r for r in self.results if (r.backend, r.origin, r.strategy) == (backend, origin, strategy)]

    def accuracy_grid(self) -> dict[tuple[str, str, str], Optional[float]]:
        grid: dict[tuple[str, str, str], Optional[float]] = {}
        for b in self.backends:
            for o in self.origins:
                for s in self.strategies:
                    grid[(b, o, s)] = None if b in self.gaps else accuracy(self.cell(b, o, s))
        return grid

    def std(self) -> dict[tuple[str, str], Optional[float]]:
        """Population standard deviation of accuracy across origins, per backend and strategy."""
        grid = self.accuracy_grid()
        out: dict[tuple[str, str], Optional[float]] = {}
        for b in self.backends:
            for s in self.strategies:
                vals = [grid[(b, o, s)] for o in self.origins]
                vals = [v for v in vals if v is not None]
                out[(b, s)] = statistics.pstdev(vals) if vals else None
        return out

    def heatmap(self, diagonal: Optional[Mapping[str, str]] = None) -> dict[tuple[str, str, str], Optional[float]]:
        """Accuracy relative to each backend's self-execution cell (origin of the same name by default)."""
        grid = self.accuracy_grid()
        diagonal = diagonal or {b: b for b in self.backends}
        out: dict[tuple[str, str, str], Optional[float]] = {}
        for (b, o, s), acc in grid.items():
            own = diagonal.get(b)
            base = grid.get((b, own, s)) if own in self.origins else None
            out[(b, o, s)] = None if acc is None or not base else acc / base
        return out

    def mean_calls(self, backend: str, strategy: str) -> float:
        rows = [r for r in self.results if r.backend == backend and r.strategy == strategy]
        return statistics.fmean(r.total_calls for r in rows) if rows else 0.0


def _resolve(source: BackendSource) -> Backend:
    if hasattr(source, "complete"):
        return source  # type: ignore[return-value]
    return source()  # type: ignore[operator]


def cross_matrix(
    instances: Sequence[Instance],
    origins: Sequence[str],
    strategies: Sequence[Strategy],
    backends: Mapping[str, BackendSource],
    workers: int = 1,
    seed: int = 0,
    keep_bundles: bool = False,
) -> RunReport:
    """Every (backend, origin, strategy) cell over every instance.

    A backend whose factory raises ``BackendUnavailable`` becomes a gap.
    Results come back in a fixed order whatever the worker count.
    """
    report = RunReport(list(backends), list(origins), [s.name for s in strategies])
    resolved: dict[str, Backend] = {}
    for name, source in backends.items():
        try:
            resolved[name] = _resolve(source)
        except BackendUnavailable as err:
            log.warning("backend %s unavailable: %s", name, err)
            report.gaps.add(name)
    jobs = [
        (bname, origin, strat, inst)
        for bname in report.backends
        if bname in resolved
        for origin in origins
        for strat in strategies
        for inst in instances
    ]

    def work(job: tuple[str, str, Strategy, Instance]) -> InstanceResult:
        bname, origin, strat, inst = job
        try:
            res = evaluate_instance(inst, origin, strat, resolved[bname], seed, keep_bundles)
        except Exception as err:  # one broken instance must not sink the grid
            log.exception("instance %s failed", inst.id)
            wrong = [
                TestVerdict(j, t.args, t.expected, ErrorMarker("internal", str(err)), False)
                for j, t in enumerate(inst.tests)
            ]
            res = InstanceResult(inst.id, origin, strat.name, bname, wrong, note=f"internal error: {err}")
        res.backend = bname
        return res

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report.results = list(pool.map(work, jobs))
    else:
        report.results = [work(j) for j in jobs]
    return report


# -- persistence ---------------------------------------------------------------------------


def verdict_rows(report: RunReport) -> list[dict[str, Any]]:
    rows = []
    for r in report.results:
        for v in r.verdicts:
            rows.append(
                {
                    "backend": r.backend,
                    "origin": r.origin,
                    "strategy": r.strategy,
                    "instance": r.instance_id,
                    "test": v.index,
                    "args": render_value(list(v.args)),
                    "expected": render_value(v.expected),
                    "predicted": render_value(v.predicted),
                    "correct": v.correct,
                    "rounds": v.rounds,
                    "calls": r.total_calls if v.index == 0 else 0,
                }
            )
    rows.sort(key=lambda d: (d["backend"], d["origin"], d["strategy"], d["instance"], d["test"]))
    return rows


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def write_report(report: RunReport, out: str | Path, diagonal: Optional[Mapping[str, str]] = None) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("verdicts.jsonl", "accuracy.csv", "std.csv", "heatmap.csv")}
    with open(paths["verdicts.jsonl"], "w", encoding="utf-8") as fh:
        for row in verdict_rows(report):
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    grid = report.accuracy_grid()
    with open(paths["accuracy.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["backend", "origin", "strategy", "accuracy", "instances", "mean_calls", "status"])
        for (b, o, s), acc in grid.items():
            cell = report.cell(b, o, s)
            mean_calls = statistics.fmean(r.total_calls for r in cell) if cell else 0.0
            w.writerow([b, o, s, _fmt(acc), len(cell), f"{mean_calls:.3f}", "gap" if acc is None else "ok"])
    with open(paths["std.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["backend", "strategy", "std"])
        for (b, s), sd in report.std().items():
            w.writerow([b, s, _fmt(sd)])
    if any(r.bundles for r in report.results):
        paths["bundles.jsonl"] = out / "bundles.jsonl"
        with open(paths["bundles.jsonl"], "w", encoding="utf-8") as fh:
            for r in report.results:
                for j, b in enumerate(r.bundles):
                    row = {"backend": r.backend, "origin": r.origin, "strategy": r.strategy, "instance": r.instance_id}
                    row.update(test=j, **b.to_json())
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
    heat = report.heatmap(diagonal)
    with open(paths["heatmap.csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "backend", *report.origins])
        for s in report.strategies:
            for b in report.backends:
                w.writerow([s, b, *(_fmt(heat[(b, o, s)]) for o in report.origins)])
    return paths


def write_drops(path: str | Path, drops: Iterable[Drop]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in drops:
            fh.write(json.dumps(d.to_json(), sort_keys=True) + "\n")


def accuracy_from_verdicts(rows: Iterable[Mapping[str, Any]]) -> dict[tuple[str, str, str], float]:
    """Recompute every cell's accuracy from persisted per-test verdict rows."""
    per_instance: dict[tuple[str, str, str], dict[str, bool]] = {}
    for row in rows:
        cell = per_instance.setdefault((row["backend"], row["origin"], row["strategy"]), {})
        cell[row["instance"]] = cell.get(row["instance"], True) and bool(row["correct"])
    return {key: accuracy([[ok] for ok in inst.values()]) for key, inst in sorted(per_instance.items())}


def read_verdicts(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def drop_summary(drops: Iterable[Drop]) -> Counter:
    return Counter(d.reason for d in drops)
