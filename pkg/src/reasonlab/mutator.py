"""Semantics-preserving program variants with node correspondence back to the original.

Every deterministic operator rewrites the syntax tree, renders it and parses
the result again, so a variant is always valid subject-language text.  While
rewriting, each statement remembers which statement of the original program it
came from (or that it is a helper with no counterpart); that provenance becomes
a mapping between CFG node ids of the variant and of the original.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

from .cfg import build_cfg
from .lang import nodes as n
from .lang.interp import DEFAULT_BUDGET, run_program
from .lang.parser import SubjectSyntaxError, parse
from .lang.render import render_unit
from .lang.values import ErrorMarker, outputs_equal, render_value

SEMANTIC_OPS = ("rename_vars", "reorder_independent")
STRUCTURAL_OPS = ("negate_condition", "for_to_while", "continue_guard")
OP_NAMES = SEMANTIC_OPS + STRUCTURAL_OPS

RENAME_PREFIXES = ("current_", "the_", "my_", "val_", "item_", "tmp_", "cur_", "v_")
BUILTIN_NAMES = frozenset({"abs", "len", "min", "max", "sum", "range", "sorted", "str", "int", "float"})
_COMPLEMENT = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


class NotApplicable(Exception):
    """The operator's target construct does not occur in the program."""


class MutationError(Exception):
    """No usable variant could be obtained."""


@dataclass(frozen=True)
class MutationOp:
    name: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.name not in OP_NAMES:
            raise ValueError(f"unknown mutation operator {self.name!r}")

    @property
    def category(self) -> str:
        return "semantic" if self.name in SEMANTIC_OPS else "structural"

    def __str__(self) -> str:
        return f"{self.name}:{self.seed}" if self.seed else self.name


@dataclass(frozen=True)
class NodeCorrespondence:
    """Mutant node id -> original node id.

    ``inverted`` lists mutant nodes whose true edge corresponds to the
    original's false edge.  ``synthetic`` lists helper nodes introduced by a
    rewrite (loop counters and the like); they have no counterpart and are
    left out of ``coverage``.
    """

    mapping: dict[str, str]
    inverted: frozenset[str] = frozenset()
    synthetic: frozenset[str] = frozenset()
    total: int = 0

    @property
    def coverage(self) -> float:
        relevant = self.total - len(self.synthetic)
        return 1.0 if relevant <= 0 else len(self.mapping) / relevant


@dataclass(frozen=True)
class MutantProgram:
    base_id: str
    ops: tuple[MutationOp, ...]
    text: str
    ast: n.AstUnit
    correspondences: dict[str, NodeCorrespondence] = field(default_factory=dict, compare=False)
    entry: Optional[str] = None
    source: str = "deterministic"

    @property
    def correspondence(self) -> Optional[NodeCorrespondence]:
        name = self.entry or (self.ast.functions[-1].name if self.ast.functions else None)
        return self.correspondences.get(name) if name else None

    @property
    def op_chain(self) -> str:
        return "+".join(str(op) for op in self.ops) or "identity"


# -- provenance -----------------------------------------------------------------


@dataclass(frozen=True)
class _Origin:
    ordinal: Optional[int]  # None for synthetic statements
    inverted: bool = False


class _Provenance:
    def __init__(self) -> None:
        # Keyed by id(); the statement itself is kept alive so ids are never reused.
        self._table: dict[int, tuple[object, _Origin]] = {}

    def set(self, stmt: object, origin: _Origin) -> None:
        self._table[id(stmt)] = (stmt, origin)

    def get(self, stmt: object) -> _Origin:
        entry = self._table.get(id(stmt))
        return entry[1] if entry else _Origin(None)

    def inherit(self, new: object, old: object, invert: bool = False) -> None:
        o = self.get(old)
        self.set(new, _Origin(o.ordinal, o.inverted != invert))

    def synthetic(self, stmt: object) -> object:
        self.set(stmt, _Origin(None))
        return stmt


_STMT_TYPES = (n.Assign, n.AugAssign, n.If, n.While, n.For, n.Break, n.Continue, n.Pass, n.Return, n.ExprStmt)


def _rebuild(node: Any, f: Callable[[Any], Any], prov: _Provenance) -> Any:
    """Bottom-up rewrite of a syntax tree; statement provenance follows the rewrite."""
    if isinstance(node, tuple):
        out = tuple(_rebuild(x, f, prov) for x in node)
        return node if all(a is b for a, b in zip(out, node)) else out
    if not is_dataclass(node) or isinstance(node, n.Span):
        return node
    changes = {}
    for fld in fields(node):
        if fld.name in ("span", "header"):
            continue
        value = getattr(node, fld.name)
        new_value = _rebuild(value, f, prov)
        if new_value is not value:
            changes[fld.name] = new_value
    new = replace(node, **changes) if changes else node
    new = f(new)
    if new is not node and isinstance(node, _STMT_TYPES):
        prov.inherit(new, node)
    return new


def _negate(test: n.Expr) -> n.Expr:
    """Equivalent condition spelled differently: ``a > b`` becomes ``not (a <= b)``."""
    if isinstance(test, n.Compare):
        return n.UnaryOp("not", n.Compare(_COMPLEMENT[test.op], test.left, test.right))
    return n.UnaryOp("not", n.UnaryOp("not", test))


def _all_names(unit: n.AstUnit) -> set[str]:
    names = set(unit.names) | BUILTIN_NAMES
    for fn in unit.functions:
        names.update(n.local_names(fn))
    return names


def _fresh(base: str, taken: set[str]) -> str:
    name, i = base, 1
    while name in taken:
        i += 1
        name = f"{base}{i}"
    taken.add(name)
    return name


# -- operators ------------------------------------------------------------------


def _targets(unit: n.AstUnit, entry: Optional[str]) -> list[n.FunctionDef]:
    if entry is not None and unit.has_function(entry):
        fn = unit.function(entry)
        return [fn] + [f for f in unit.functions if f is not fn]
    return list(reversed(unit.functions))


def _replace_function(unit: n.AstUnit, old: n.FunctionDef, new: n.FunctionDef) -> n.AstUnit:
    return n.AstUnit(tuple(new if f is old else f for f in unit.functions), unit.text)


def _op_rename(unit: n.AstUnit, op: MutationOp, prov: _Provenance, entry: Optional[str]) -> n.AstUnit:
    prefix = RENAME_PREFIXES[op.seed % len(RENAME_PREFIXES)]
    taken = _all_names(unit)
    functions = []
    renamed_any = False
    for fn in unit.functions:
        mapping = {}
        for name in n.local_names(fn):
            mapping[name] = _fresh(prefix + name.lstrip("_"), taken)
        renamed_any = renamed_any or bool(mapping)

        def f(node: Any, mapping: dict[str, str] = mapping) -> Any:
            if isinstance(node, n.Name) and node.id in mapping:
                return replace(node, id=mapping[node.id])
            if isinstance(node, (n.For, n.ListComp)) and node.target in mapping:
                return replace(node, target=mapping[node.target])
            return node

        body = _rebuild(fn.body, f, prov)
        functions.append(replace(fn, params=tuple(mapping.get(p, p) for p in fn.params), body=body))
    if not renamed_any:
        raise NotApplicable("no variables to rename")
    return n.AstUnit(tuple(functions), unit.text)


def _op_negate(unit: n.AstUnit, op: MutationOp, prov: _Provenance, entry: Optional[str]) -> n.AstUnit:
    for fn in _targets(unit, entry):
        first = next((s for s in n.walk_statements(fn.body) if isinstance(s, n.If)), None)
        if first is None:
            continue
        new_if = replace(first, test=_negate(first.test))
        prov.inherit(new_if, first)
        new_body = _swap_stmt(fn.body, first, new_if, prov)
        return _replace_function(unit, fn, replace(fn, body=new_body))
    raise NotApplicable("no if statement")


def _swap_stmt(body: tuple[n.Stmt, ...], old: n.Stmt, new: Any, prov: _Provenance) -> tuple[n.Stmt, ...]:
    """Replace statement ``old`` (by identity) with ``new`` (a statement or a tuple of them)."""
    out: list[n.Stmt] = []
    for stmt in body:
        if stmt is old:
            out.extend(new if isinstance(new, tuple) else (new,))
            continue
        changes = {}
        for name in ("body", "orelse"):
            block = getattr(stmt, name, None)
            if block:
                nb = _swap_stmt(block, old, new, prov)
                if len(nb) != len(block) or any(a is not b for a, b in zip(nb, block)):
                    changes[name] = nb
        if changes:
            rebuilt = replace(stmt, **changes)
            prov.inherit(rebuilt, stmt)
            out.append(rebuilt)
        else:
            out.append(stmt)
    return tuple(out)


def _op_for_to_while(unit: n.AstUnit, op: MutationOp, prov: _Provenance, entry: Optional[str]) -> n.AstUnit:
    taken = _all_names(unit)
    for fn in _targets(unit, entry):
        loop = next((s for s in n.walk_statements(fn.body) if isinstance(s, n.For)), None)
        if loop is None:
            continue
        seq = _fresh(f"{loop.target.lstrip('_') or 'it'}_items", taken)
        idx = _fresh(f"{loop.target.lstrip('_') or 'it'}_pos", taken)
        init_seq = prov.synthetic(n.Assign(n.Name(seq), n.Slice(loop.iter, None, None, None)))
        init_idx = prov.synthetic(n.Assign(n.Name(idx), n.Const(0)))
        bind = prov.synthetic(n.Assign(n.Name(loop.target), n.Index(n.Name(seq), n.Name(idx))))
        step = prov.synthetic(n.AugAssign(n.Name(idx), "+", n.Const(1)))
        test = n.Compare("<", n.Name(idx), n.Call("len", (n.Name(seq),)))
        new_loop = n.While(test, (bind, step) + loop.body)
        prov.inherit(new_loop, loop)
        new_body = _swap_stmt(fn.body, loop, (init_seq, init_idx, new_loop), prov)
        return _replace_function(unit, fn, replace(fn, body=new_body))
    raise NotApplicable("no for loop")


def _op_continue_guard(unit: n.AstUnit, op: MutationOp, prov: _Provenance, entry: Optional[str]) -> n.AstUnit:
    for fn in _targets(unit, entry):
        for loop in n.walk_statements(fn.body):
            if not isinstance(loop, (n.For, n.While)) or not loop.body:
                continue
            tail = loop.body[-1]
            if not isinstance(tail, n.If) or tail.orelse:
                continue
            guard = n.If(n.UnaryOp("not", tail.test), (prov.synthetic(n.Continue()),))
            prov.inherit(guard, tail, invert=True)
            new_loop = replace(loop, body=loop.body[:-1] + (guard,) + tail.body)
            prov.inherit(new_loop, loop)
            new_body = _swap_stmt(fn.body, loop, new_loop, prov)
            return _replace_function(unit, fn, replace(fn, body=new_body))
    raise NotApplicable("no loop ending in an else-less if")


def _user_call(expr: Optional[n.Expr], unit: n.AstUnit) -> bool:
    return any(
        (isinstance(e, n.Call) and unit.has_function(e.func)) or isinstance(e, n.MethodCall)
        for e in n.walk_expr(expr)
    )


def _reorderable(stmt: n.Stmt, unit: n.AstUnit) -> Optional[set[str]]:
    """Names read or written by a movable statement, or None if it may not move."""
    if isinstance(stmt, n.Assign) and isinstance(stmt.target, n.Name):
        pass
    elif isinstance(stmt, n.AugAssign) and isinstance(stmt.target, n.Name):
        numeric = isinstance(stmt.value, n.Const) and type(stmt.value.value) in (int, float)
        if not (stmt.op in ("-", "//") or numeric):
            return None
    else:
        return None
    if _user_call(stmt.value, unit):
        return None
    names = n.names_read(stmt.value) | {stmt.target.id}
    for e in n.walk_expr(stmt.value):
        if isinstance(e, n.ListComp):
            names.add(e.target)
    return names


def _op_reorder(unit: n.AstUnit, op: MutationOp, prov: _Provenance, entry: Optional[str]) -> n.AstUnit:
    for fn in _targets(unit, entry):
        candidates: list[tuple[n.Stmt, n.Stmt]] = []

        def scan(body: tuple[n.Stmt, ...]) -> None:
            for a, b in zip(body, body[1:]):
                ra, rb = _reorderable(a, unit), _reorderable(b, unit)
                if ra is not None and rb is not None and not (ra & rb):
                    candidates.append((a, b))
            for stmt in body:
                for block in n.child_blocks(stmt):
                    scan(block)

        scan(fn.body)
        if not candidates:
            continue
        a, b = random.Random(op.seed).choice(candidates)
        new_body = _swap_pair(fn.body, a, b, prov)
        return _replace_function(unit, fn, replace(fn, body=new_body))
    raise NotApplicable("no adjacent independent statements")


def _swap_pair(body: tuple[n.Stmt, ...], a: n.Stmt, b: n.Stmt, prov: _Provenance) -> tuple[n.Stmt, ...]:
    for i in range(len(body) - 1):
        if body[i] is a and body[i + 1] is b:
            return body[:i] + (b, a) + body[i + 2 :]
    out = []
    for stmt in body:
        changes = {}
        for name in ("body", "orelse"):
            block = getattr(stmt, name, None)
            if block:
                nb = _swap_pair(block, a, b, prov)
                if any(x is not y for x, y in zip(nb, block)):
                    changes[name] = nb
        if changes:
            rebuilt = replace(stmt, **changes)
            prov.inherit(rebuilt, stmt)
            out.append(rebuilt)
        else:
            out.append(stmt)
    return tuple(out)


_OPS: dict[str, Callable[[n.AstUnit, MutationOp, _Provenance, Optional[str]], n.AstUnit]] = {
    "rename_vars": _op_rename,
    "negate_condition": _op_negate,
    "for_to_while": _op_for_to_while,
    "continue_guard": _op_continue_guard,
    "reorder_independent": _op_reorder,
}


# -- assembling variants --------------------------------------------------------


def _base_provenance(unit: n.AstUnit) -> _Provenance:
    prov = _Provenance()
    for fn in unit.functions:
        for i, stmt in enumerate(n.walk_statements(fn.body)):
            prov.set(stmt, _Origin(i))
    return prov


def _correspondences(base: n.AstUnit, transformed: n.AstUnit, reparsed: n.AstUnit, prov: _Provenance) -> dict[str, NodeCorrespondence]:
    out = {}
    for fn_t, fn_r in zip(transformed.functions, reparsed.functions):
        if not base.has_function(fn_r.name):
            continue
        base_cfg = build_cfg(base, fn_r.name)
        mut_cfg = build_cfg(reparsed, fn_r.name)
        mapping = {mut_cfg.entry: base_cfg.entry, mut_cfg.exit: base_cfg.exit}
        inverted, synthetic = set(), set()
        pairs = list(zip(n.walk_statements(fn_t.body), n.walk_statements(fn_r.body)))
        for ordinal, (t_stmt, _) in enumerate(pairs):
            node_id = mut_cfg.node_by_ordinal.get(ordinal)
            if node_id is None:
                continue
            origin = prov.get(t_stmt)
            if origin.ordinal is None:
                synthetic.add(node_id)
                continue
            base_id = base_cfg.node_by_ordinal.get(origin.ordinal)
            if base_id is None:
                continue
            mapping[node_id] = base_id
            if origin.inverted:
                inverted.add(node_id)
        out[fn_r.name] = NodeCorrespondence(mapping, frozenset(inverted), frozenset(synthetic), len(mut_cfg.nodes))
    return out


def _assemble(base: n.AstUnit, base_id: str, ops: Sequence[MutationOp], entry: Optional[str]) -> MutantProgram:
    prov = _base_provenance(base)
    unit = base
    for op in ops:
        unit = _OPS[op.name](unit, op, prov, entry)
    text = render_unit(unit)
    reparsed = parse(text)
    return MutantProgram(base_id, tuple(ops), text, reparsed, _correspondences(base, unit, reparsed, prov), entry)


def mutate_deterministic(
    program: n.AstUnit,
    op: MutationOp | str,
    seed: int = 0,
    base_id: str = "",
    entry: Optional[str] = None,
) -> MutantProgram:
    """Apply one operator; raises :class:`NotApplicable` when its target is absent.

    With ``entry`` given, targeted operators look in that function first.
    """
    if isinstance(op, str):
        op = MutationOp(op, seed)
    return _assemble(program, base_id, [op], entry)


def mutate_chain(
    program: n.AstUnit, ops: Sequence[MutationOp], base_id: str = "", entry: Optional[str] = None, skip_inapplicable: bool = True
) -> MutantProgram:
    """Apply operators in order, skipping inapplicable ones (or raising if asked not to)."""
    chosen: list[MutationOp] = []
    for op in ops:
        try:
            _assemble(program, base_id, chosen + [op], entry)
        except NotApplicable:
            if not skip_inapplicable:
                raise
            continue
        chosen.append(op)
    return _assemble(program, base_id, chosen, entry)


def default_recipe(k: int = 2, seed: int = 0) -> list[list[list[MutationOp]]]:
    """Per variant, a list of alternative operator chains (first applicable wins)."""
    recipes: list[list[list[MutationOp]]] = []
    for i in range(k):
        if i == 0:
            recipes.append([[MutationOp("rename_vars", seed), MutationOp("negate_condition")]])
        elif i == 1:
            recipes.append([[MutationOp("for_to_while")], [MutationOp("continue_guard")]])
        else:
            recipes.append([[MutationOp("rename_vars", seed + i), MutationOp("reorder_independent", seed + i)]])
    return recipes


def default_variants(
    program: n.AstUnit, k: int = 2, seed: int = 0, base_id: str = "", entry: Optional[str] = None
) -> list[MutantProgram]:
    variants = []
    for alternatives in default_recipe(k, seed):
        chosen: Optional[MutantProgram] = None
        for chain in alternatives:
            candidate = mutate_chain(program, chain, base_id, entry)
            if candidate.ops:
                chosen = candidate
                break
        if chosen is None:
            chosen = _assemble(program, base_id, [], entry)
        variants.append(chosen)
    return variants


# -- reasoner-driven mutation ---------------------------------------------------

_CODE_BLOCK = re.compile(r"```(?:python|py)?[ \t]*\n(.*?)```", re.DOTALL)


def _line_anchor_correspondence(base: n.AstUnit, mutant: n.AstUnit) -> dict[str, NodeCorrespondence]:
    out = {}
    for fn in mutant.functions:
        if not base.has_function(fn.name):
            continue
        bc, mc = build_cfg(base, fn.name), build_cfg(mutant, fn.name)
        mapping = {mc.entry: bc.entry, mc.exit: bc.exit}
        used: set[str] = set()
        for node in mc.ordered():
            if node.kind in ("entry", "exit"):
                continue
            for cand in bc.ordered():
                if cand.id not in used and cand.kind == node.kind and cand.label == node.label:
                    mapping[node.id] = cand.id
                    used.add(cand.id)
                    break
        out[fn.name] = NodeCorrespondence(mapping, frozenset(), frozenset(), len(mc.nodes))
    return out


def parse_variants(text: str, entry: str) -> list[n.AstUnit]:
    out = []
    for block in _CODE_BLOCK.findall(text):
        try:
            unit = parse(block)
        except SubjectSyntaxError:
            continue
        if unit.has_function(entry):
            out.append(unit)
    return out


def mutate_llm(
    program: Any,
    backend: Any,
    k: int = 2,
    seed: int = 0,
) -> list[MutantProgram]:
    """Ask the reasoner for ``k`` variants in a single request (one retry if none parse).

    ``program`` carries ``text``, ``entry_point`` and ``id``.  A returned
    variant that is exactly one of the deterministic recipe results keeps that
    result's exact correspondence; anything else is aligned by matching
    identical source lines.  ``seed`` must match the seed the reasoner was
    configured with for exact matches to be recognised.
    """
    from .backend.prompts import mutate_request

    base = parse(program.text)
    request = mutate_request(program.text, program.entry_point, k)
    units: list[n.AstUnit] = []
    for _ in range(2):
        units = parse_variants(backend.complete(request), program.entry_point)
        if units:
            break
    if not units:
        raise MutationError("no parseable variant in the reasoner's response")
    known = default_variants(base, k, seed, program.id, program.entry_point)
    out = []
    for unit in units[:k]:
        match = next((m for m in known if m.ast == unit), None)
        if match is not None:
            out.append(replace(match, source="reasoner"))
            continue
        text = render_unit(unit)
        out.append(
            MutantProgram(program.id, (), text, parse(text), _line_anchor_correspondence(base, unit), program.entry_point, "reasoner")
        )
    return out


# -- equivalence ----------------------------------------------------------------


@dataclass(frozen=True)
class Equivalence:
    equivalent: bool
    input: Optional[tuple[Any, ...]] = None
    base_output: Any = None
    mutant_output: Any = None


def same_result(a: Any, b: Any) -> bool:
    if isinstance(a, ErrorMarker) or isinstance(b, ErrorMarker):
        return isinstance(a, ErrorMarker) and isinstance(b, ErrorMarker) and a.kind == b.kind
    return outputs_equal(a, b)


def verify_mutant(
    base: n.AstUnit, mutant: MutantProgram | n.AstUnit, tests: Iterable[Sequence[Any]], entry: str, budget: int = DEFAULT_BUDGET
) -> Equivalence:
    """Run both programs on every input; report the first input where they differ."""
    unit = mutant.ast if isinstance(mutant, MutantProgram) else mutant
    for args in tests:
        b = run_program(base, entry, list(args), budget).output
        m = run_program(unit, entry, list(args), budget).output
        if not same_result(b, m):
            return Equivalence(False, tuple(args), b, m)
    return Equivalence(True)


def audit_record(mutant: MutantProgram, verdict: Equivalence) -> dict[str, Any]:
    return {
        "base_id": mutant.base_id,
        "ops": mutant.op_chain,
        "source": mutant.source,
        "equivalent": verdict.equivalent,
        "witness": None if verdict.input is None else [render_value(a) for a in verdict.input],
        "base_output": None if verdict.equivalent else render_value(verdict.base_output),
        "mutant_output": None if verdict.equivalent else render_value(verdict.mutant_output),
    }


def append_audit(path: str | Path, records: Iterable[dict[str, Any]]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
