"""Offline reasoner built on the reference interpreter, with injectable faults.

The mock keeps no state between calls.  Everything it needs is in the
request: the program and arguments from the first user message, and the
refinement history from the feedback messages that follow.  Replaying that
history decides which faults the reasoner has already been talked out of,
so equal requests always get byte-identical answers.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from ..cfg import build_cfg
from ..lang import nodes as n
from ..lang.interp import Tracer, run_traced
from ..lang.oracle import steps_from_raw
from ..lang.parser import SubjectSyntaxError, parse
from ..lang.render import render_unit
from ..lang.values import copy_value, render_value
from ..trace import Trace, render_trace
from .base import ChatRequest, Reply
from .prompts import read_fields

FAULT_KINDS = ("wrong_branch", "stale_update", "value_perturb")

# Faulty runs can loop where the real program would not; keep the emitted trace bounded.
MOCK_BUDGET = 10_000

_FOCUS_RE = re.compile(r"^FOCUS STEP (\d+) \| NODE (\S+)", re.MULTILINE)


@dataclass(frozen=True)
class FaultSpec:
    """One reasoning slip.

    ``site`` is the ordinal of the if/while decision for ``wrong_branch`` and
    the step index for the other two kinds.  ``payload`` is the delta added by
    ``value_perturb``.
    """

    kind: str
    site: int
    payload: Any = 1
    id: str = ""

    def __post_init__(self) -> None:
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.site < 1:
            raise ValueError("fault sites count from 1")

    @property
    def site_space(self) -> str:
        return "decision" if self.kind == "wrong_branch" else "step"


def program_key(text: str) -> str:
    """Fingerprint of a program that ignores formatting and comments."""
    return hashlib.sha256(render_unit(parse(text)).encode("utf-8")).hexdigest()[:16]


def args_key(args: Sequence[Any]) -> str:
    return render_value(list(args))


@dataclass(frozen=True)
class FaultPlan:
    entries: Mapping[tuple[str, str], tuple[FaultSpec, ...]] = field(default_factory=dict)

    def faults_for(self, text: str, args: Sequence[Any]) -> tuple[FaultSpec, ...]:
        if not self.entries:
            return ()
        try:
            key = (program_key(text), args_key(args))
        except SubjectSyntaxError:
            return ()
        return self.entries.get(key, ())

    def with_faults(self, text: str, args: Sequence[Any], *faults: FaultSpec) -> "FaultPlan":
        key = (program_key(text), args_key(args))
        merged = list(self.entries.get(key, ()))
        taken = {(f.site_space, f.site) for f in merged}
        for i, f in enumerate(faults):
            if (f.site_space, f.site) in taken:
                raise ValueError(f"two faults at {f.site_space} site {f.site}")
            taken.add((f.site_space, f.site))
            if not f.id:
                f = FaultSpec(f.kind, f.site, f.payload, f"{key[0][:8]}:{f.kind}@{f.site}")
            merged.append(f)
        entries = dict(self.entries)
        entries[key] = tuple(merged)
        return FaultPlan(entries)

    def __len__(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def to_json(self) -> list[dict[str, Any]]:
        return [
            {
                "program": prog,
                "args": args,
                "faults": [{"kind": f.kind, "site": f.site, "payload": render_value(f.payload), "id": f.id} for f in faults],
            }
            for (prog, args), faults in sorted(self.entries.items())
        ]

    @classmethod
    def from_json(cls, rows: Iterable[Mapping[str, Any]]) -> "FaultPlan":
        from ..lang.values import parse_literal

        entries = {}
        for row in rows:
            faults = tuple(
                FaultSpec(f["kind"], int(f["site"]), parse_literal(f.get("payload", "1")), f.get("id", ""))
                for f in row["faults"]
            )
            entries[(row["program"], row["args"])] = faults
        return cls(entries)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FaultPlan":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


class FaultTracer(Tracer):
    """Applies faults while tracing and notes the step where each one shows."""

    def __init__(self, faults: Iterable[FaultSpec]):
        super().__init__()
        faults = list(faults)
        self.branch_faults = {f.site: f for f in faults if f.kind == "wrong_branch"}
        self.step_faults = {f.site: f for f in faults if f.kind != "wrong_branch"}
        self.manifest: dict[str, int] = {}

    def decide(self, stmt: n.Stmt, value: bool) -> bool:
        value = super().decide(stmt, value)
        fault = self.branch_faults.get(self.occurrences)
        if fault is None:
            return value
        self.manifest[fault.id] = self.next_index
        return not value

    def skip(self, index: int, stmt: n.Stmt) -> bool:
        fault = self.step_faults.get(index)
        if fault is not None and fault.kind == "stale_update" and n.written_names(stmt):
            self.manifest[fault.id] = index
            return True
        return False

    def adjust(self, index: int, stmt: n.Stmt, env: dict[str, Any]) -> None:
        fault = self.step_faults.get(index)
        if fault is None or fault.kind != "value_perturb":
            return
        for name in n.written_names(stmt):
            v = env.get(name)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                env[name] = v + fault.payload
                self.manifest[fault.id] = index
                return


@dataclass(frozen=True)
class FaultRun:
    trace: Trace
    manifest: dict[str, tuple[int, Optional[str]]]


def faulty_trace(
    unit: n.AstUnit,
    entry: str,
    args: Sequence[Any],
    faults: Iterable[FaultSpec] = (),
    budget: int = MOCK_BUDGET,
) -> FaultRun:
    """The trace a reasoner holding ``faults`` would report, and where each fault surfaced."""
    cfg = build_cfg(unit, entry)
    tracer = FaultTracer(faults)
    outcome = run_traced(unit, entry, args, budget, tracer)
    steps = steps_from_raw(tracer, unit.function(entry), cfg)
    trace = Trace("", [copy_value(a) for a in args], steps, outcome.output, True)
    manifest = {fid: (i, steps[i - 1].node if i <= len(steps) else None) for fid, i in tracer.manifest.items()}
    return FaultRun(trace, manifest)


def _focus_history(request: ChatRequest) -> list[tuple[int, str]]:
    out = []
    for content in request.user_messages[1:]:
        m = _FOCUS_RE.search(content)
        if m:
            out.append((int(m.group(1)), m.group(2)))
    return out


class MockBackend:
    """Deterministic reasoner: oracle traces bent by a fault plan.

    ``mutation_seed`` fixes which deterministic recipe answers mutate requests.
    """

    name = "mock"

    def __init__(self, plan: Optional[FaultPlan] = None, mutation_seed: int = 0, budget: int = MOCK_BUDGET):
        self.plan = plan or FaultPlan()
        self.mutation_seed = mutation_seed
        self.budget = budget

    def cache_identity(self) -> str:
        return f"mock:{self.plan.fingerprint()}:seed={self.mutation_seed}"

    def active_faults(
        self, code: str, entry: str, args: Sequence[Any], history: Sequence[tuple[int, str]]
    ) -> list[FaultSpec]:
        """Replay the feedback history; a fault is dropped once feedback points at it."""
        unit = parse(code)
        active = list(self.plan.faults_for(code, args))
        for step, node in history:
            if not active:
                break
            run = faulty_trace(unit, entry, args, active, self.budget)
            hit = [f for f in active if run.manifest.get(f.id) == (step, node)]
            active = [f for f in active if f not in hit]
        return active

    def complete(self, request: ChatRequest) -> str:
        users = request.user_messages
        if not users:
            return Reply("I need a program to work with.")
        try:
            fields = read_fields(users[0])
            unit = parse(fields.code)
            unit.function(fields.entry)
        except (ValueError, SubjectSyntaxError, KeyError) as err:
            return Reply(f"I could not read the program: {err}")
        if request.purpose == "mutate":
            return Reply(self._variants(unit, fields.entry, fields.variants or 2))
        if fields.args is None:
            return Reply("No arguments were given, so there is nothing to trace.")
        try:
            active = self.active_faults(fields.code, fields.entry, fields.args, _focus_history(request))
            run = faulty_trace(unit, fields.entry, fields.args, active, self.budget)
        except ValueError as err:
            return Reply(f"The arguments do not fit the function: {err}")
        call = f"{fields.entry}({', '.join(render_value(a) for a in fields.args)})"
        if request.purpose == "cot":
            head = f"Let me work through {call} one statement at a time.\n\n"
        elif request.purpose == "refine":
            head = f"Thanks, here is the corrected trace of {call}.\n\n"
        else:
            head = f"Tracing {call}.\n\n"
        return Reply(head + render_trace(run.trace))

    def _variants(self, unit: n.AstUnit, entry: str, k: int) -> str:
        from ..mutator import default_variants

        variants = default_variants(unit, k, self.mutation_seed, entry=entry)
        blocks = [f"Variant {i}:\n\n```python\n{v.text.rstrip()}\n```\n" for i, v in enumerate(variants, 1)]
        return "\n".join(blocks) if blocks else "No variants."


# -- seeded plans --------------------------------------------------------------


def output_changing_sites(unit: n.AstUnit, entry: str, args: Sequence[Any], limit: int = 64) -> list[int]:
    """Decision ordinals whose flip changes the returned value and still terminates."""
    from ..mutator import same_result

    tracer = Tracer()
    base = run_traced(unit, entry, args, MOCK_BUDGET, tracer)
    sites = []
    for site in range(1, min(tracer.occurrences, limit) + 1):
        probe = FaultTracer([FaultSpec("wrong_branch", site, id="probe")])
        out = run_traced(unit, entry, args, MOCK_BUDGET, probe)
        if out.ok and not same_result(out.output, base.output):
            sites.append(site)
    return sites


def seeded_fault_plan(
    instances: Sequence[Any],
    rate: float = 0.4,
    seed: int = 0,
    origins: Optional[Sequence[str]] = None,
    variant_rate: float = 0.5,
    k: int = 2,
    mutation_seed: int = 0,
) -> FaultPlan:
    """Put output-changing branch slips on ``rate`` of the instances.

    For every chosen instance, each test of each origin's solution gets one
    wrong_branch fault where one exists.  With probability ``variant_rate``
    the first mutant receives an independent slip as well, so mutant evidence
    is not always clean.  Instances need ``id``, ``entry_point``,
    ``solutions`` (origin to object with ``text``) and ``tests`` (objects with
    ``args``).
    """
    from ..mutator import default_variants

    rng = random.Random(seed)
    ordered = sorted(instances, key=lambda i: i.id)
    chosen = set(rng.sample([i.id for i in ordered], round(rate * len(ordered))))
    plan = FaultPlan()
    for inst in ordered:
        if inst.id not in chosen:
            continue
        for origin in sorted(origins or inst.solutions):
            text = inst.solutions[origin].text
            unit = parse(text)
            variant = None
            if k > 0:
                vs = default_variants(unit, k, mutation_seed, entry=inst.entry_point)
                variant = vs[0] if vs else None
            for j, test in enumerate(inst.tests):
                sites = output_changing_sites(unit, inst.entry_point, test.args)
                if not sites:
                    continue
                fid = f"{inst.id}/{origin}/t{j}"
                plan = plan.with_faults(text, test.args, FaultSpec("wrong_branch", rng.choice(sites), id=fid))
                if variant is not None and rng.random() < variant_rate:
                    vsites = output_changing_sites(variant.ast, inst.entry_point, test.args)
                    if vsites:
                        vfault = FaultSpec("wrong_branch", rng.choice(vsites), id=fid + "/v1")
                        plan = plan.with_faults(variant.text, test.args, vfault)
    return plan
