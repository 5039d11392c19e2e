"""Command-line entry point.

Exit codes: 0 success, 1 findings (diagnoses or failed tests), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .backend import (
    BackendUnavailable,
    CachingBackend,
    FaultPlan,
    LiveBackend,
    LiveConfig,
    MockBackend,
    ResponseCache,
    seeded_fault_plan,
)
from .cfg import build_cfg, to_dot
from .inspector import synthesize_feedback, validate_trace
from .lang.parser import SubjectSyntaxError, parse
from .lang.values import LiteralError, parse_literal
from .pipeline import (
    STRATEGY_NAMES,
    DatasetError,
    Strategy,
    accuracy_from_verdicts,
    cross_matrix,
    drop_summary,
    filter_benchmark,
    load_dataset,
    read_verdicts,
    write_dataset,
    write_drops,
    write_report,
)
from .trace import parse_trace_text, read_traces

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("reasonlab")


class UsageError(Exception):
    pass


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name, "").strip()
    try:
        return int(raw) if raw else default
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {raw!r}") from None


def _csv(text: Optional[str]) -> Optional[list[str]]:
    if not text:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _load(path: str) -> list[dict[str, Any]]:
    try:
        return load_dataset(path)
    except OSError as err:
        raise UsageError(f"cannot read dataset: {err}") from None
    except DatasetError as err:
        raise UsageError(f"bad dataset: {err}") from None


# -- filter -----------------------------------------------------------------------------


def cmd_filter(args: argparse.Namespace) -> int:
    records = _load(args.dataset)
    kept, drops = filter_benchmark(records, _csv(args.origins), max_tests=args.max_tests)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_dataset(out / "retained.jsonl", kept)
        write_drops(out / "drops.jsonl", drops)
    except OSError as err:
        raise UsageError(f"cannot write results: {err}") from None
    print(f"retained {len(kept)} of {len(records)} instances -> {out / 'retained.jsonl'}")
    for reason, count in sorted(drop_summary(drops).items()):
        print(f"dropped {count}: {reason}")
    return EXIT_OK


# -- run ----------------------------------------------------------------------------------


def _strategies(args: argparse.Namespace) -> list[Strategy]:
    names = list(STRATEGY_NAMES) if args.strategy == "all" else _csv(args.strategy) or []
    try:
        return [Strategy(n, args.k, args.rounds) for n in names]
    except ValueError as err:
        raise UsageError(str(err)) from None


def _backend(args: argparse.Namespace, instances: Optional[list] = None):
    if args.backend == "live":
        try:
            config = LiveConfig.from_env(
                api_base=args.api_base, api_key=args.api_key, model=args.model, parallelism=args.parallelism
            )
        except BackendUnavailable as err:
            raise UsageError(str(err)) from None
        backend = LiveBackend(config)
        if not args.no_cache:
            cache_dir = args.cache_dir or os.environ.get("REASONLAB_CACHE_DIR") or Path.home() / ".cache" / "reasonlab"
            backend = CachingBackend(backend, ResponseCache(cache_dir))
        return backend
    plan = FaultPlan()
    if args.fault_plan:
        try:
            plan = FaultPlan.load(args.fault_plan)
        except (OSError, ValueError, KeyError) as err:
            raise UsageError(f"cannot read fault plan: {err}") from None
    elif args.fault_rate and instances is not None:
        plan = seeded_fault_plan(instances, args.fault_rate, args.seed, k=args.k, mutation_seed=args.seed)
    return MockBackend(plan, mutation_seed=args.seed)


def cmd_run(args: argparse.Namespace) -> int:
    strategies = _strategies(args)
    if args.backend == "live":
        backend = _backend(args)  # fail on a missing credential before touching the dataset
    records = _load(args.dataset)
    instances, drops = filter_benchmark(records, _csv(args.origins))
    if drops:
        print(f"note: {len(drops)} instance(s) failed validation and were skipped", file=sys.stderr)
    origins = _csv(args.origins) or sorted({o for i in instances for o in i.solutions})
    if args.backend == "mock":
        backend = _backend(args, instances)
    report = cross_matrix(
        instances, origins, strategies, {args.backend_name or backend.name: backend},
        workers=args.workers, seed=args.seed, keep_bundles=args.transcripts,
    )
    try:
        write_report(report, args.out)
        write_drops(Path(args.out) / "drops.jsonl", drops)
    except OSError as err:
        raise UsageError(f"cannot write results: {err}") from None
    grid = report.accuracy_grid()
    print(f"{'backend':<10} {'origin':<12} {'strategy':<20} {'accuracy':>8} {'calls/inst':>10}")
    for (b, o, s), acc in grid.items():
        calls = [r.total_calls for r in report.cell(b, o, s)]
        mean = sum(calls) / len(calls) if calls else 0.0
        shown = "gap" if acc is None else f"{acc:.4f}"
        print(f"{b:<10} {o:<12} {s:<20} {shown:>8} {mean:>10.2f}")
    failed = any(not r.passed for r in report.results)
    return EXIT_FINDINGS if failed else EXIT_OK


# -- report -----------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.out) / "verdicts.jsonl"
    try:
        rows = read_verdicts(path)
    except OSError as err:
        raise UsageError(f"cannot read verdicts: {err}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"corrupt verdict file {path}: {err}") from None
    for (b, o, s), acc in accuracy_from_verdicts(rows).items():
        print(f"{b},{o},{s},{acc:.6f}")
    return EXIT_OK


# -- cfg ----------------------------------------------------------------------------------


def _read_source(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read {path}: {err}") from None
    try:
        return parse(text)
    except SubjectSyntaxError as err:
        raise UsageError(f"{path}: {err.kind} error at {err}") from None


def cmd_cfg(args: argparse.Namespace) -> int:
    unit = _read_source(args.source)
    names = [args.function] if args.function else [fn.name for fn in unit.functions]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in names:
            if not unit.has_function(name):
                raise UsageError(f"no function named {name!r}")
            path = out / f"{name}.dot"
            path.write_text(to_dot(build_cfg(unit, name)), encoding="utf-8")
            print(path)
    except OSError as err:
        raise UsageError(f"cannot write DOT files: {err}") from None
    return EXIT_OK


# -- verify-trace ----------------------------------------------------------------------


def _entry(unit, wanted: Optional[str]) -> str:
    if wanted:
        if not unit.has_function(wanted):
            raise UsageError(f"no function named {wanted!r}")
        return wanted
    if len(unit.functions) == 1:
        return unit.functions[0].name
    raise UsageError("the source defines several functions; pass --entry")


def cmd_verify_trace(args: argparse.Namespace) -> int:
    unit = _read_source(args.source)
    entry = _entry(unit, args.entry)
    cfg = build_cfg(unit, entry)
    inputs = None
    if args.args:
        try:
            inputs = parse_literal(args.args)
        except LiteralError as err:
            raise UsageError(f"--args is not a literal: {err}") from None
        if not isinstance(inputs, list):
            raise UsageError("--args must be a list literal such as [1, 2]")
    try:
        if args.trace.endswith(".jsonl"):
            traces = read_traces(args.trace)
        else:
            text = Path(args.trace).read_text(encoding="utf-8")
            report = parse_trace_text(text, cfg, inputs)
            if report.trace is None:
                raise UsageError(f"{args.trace}: {report.fatal}")
            traces = [report.trace]
    except OSError as err:
        raise UsageError(f"cannot read {args.trace}: {err}") from None
    except (ValueError, KeyError, TypeError, LiteralError) as err:
        raise UsageError(f"{args.trace}: malformed trace file ({err})") from None
    if not traces:
        raise UsageError(f"{args.trace}: no traces")
    findings = False
    for i, trace in enumerate(traces):
        diagnoses = validate_trace(trace, cfg, unit)
        label = f"trace {i + 1}: " if len(traces) > 1 else ""
        if not diagnoses:
            print(f"{label}healthy")
            continue
        findings = True
        print(f"{label}problematic ({len(diagnoses)} finding(s))")
        for d in diagnoses:
            print(f"  {d.render()}")
        print(synthesize_feedback(diagnoses, cfg, trace).render())
    return EXIT_FINDINGS if findings else EXIT_OK


# -- demo-dataset -------------------------------------------------------------------------


def cmd_demo_dataset(args: argparse.Namespace) -> int:
    from .corpus import dataset_records

    records = dataset_records(tuple(_csv(args.origins) or ["human"]))
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as err:
        raise UsageError(f"cannot write {args.out}: {err}") from None
    print(f"wrote {len(records)} instances to {args.out}")
    return EXIT_OK


# -- wiring ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reasonlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="keep instances every origin solves; cap tests")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="filtered")
    p.add_argument("--origins", help="comma-separated origins to require (default: all present)")
    p.add_argument("--max-tests", type=int, default=15)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("run", help="evaluate strategies on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="results")
    p.add_argument("--backend", choices=("mock", "live"), default=os.environ.get("REASONLAB_BACKEND", "mock"))
    p.add_argument("--backend-name", help="label for the backend in reports (default: mock or live)")
    p.add_argument("--strategy", default="remind", help=f"comma list of {', '.join(STRATEGY_NAMES)}, or 'all'")
    p.add_argument("--origins", help="comma-separated origins (default: all)")
    p.add_argument("--k", type=int, default=2, help="variants per program")
    p.add_argument("--rounds", type=int, default=2, help="refinement rounds per test")
    p.add_argument("--workers", type=int, default=_env_int("REASONLAB_WORKERS", 1))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-cache", action="store_true", help="do not cache live responses on disk")
    p.add_argument("--cache-dir")
    p.add_argument("--transcripts", action="store_true", help="also write bundles.jsonl with conversations")
    p.add_argument("--fault-plan", help="mock: JSON fault plan file")
    p.add_argument("--fault-rate", type=float, default=0.0, help="mock: seed faults on this share of instances")
    p.add_argument("--api-base")
    p.add_argument("--api-key")
    p.add_argument("--model")
    p.add_argument("--parallelism", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="recompute accuracy from stored verdicts")
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("cfg", help="write one DOT file per function")
    p.add_argument("source")
    p.add_argument("--out", default=".")
    p.add_argument("--function")
    p.set_defaults(func=cmd_cfg)

    p = sub.add_parser("verify-trace", help="check a trace against a program's CFG")
    p.add_argument("source")
    p.add_argument("trace", help="protocol text, or .jsonl of stored traces")
    p.add_argument("--entry")
    p.add_argument("--args", help="input as a list literal, e.g. '[[1, 2, 3]]'")
    p.set_defaults(func=cmd_verify_trace)

    p = sub.add_parser("demo-dataset", help="write the built-in corpus as a dataset")
    p.add_argument("--out", default="corpus.jsonl")
    p.add_argument("--origins", help="comma-separated origin names (default: human)")
    p.set_defaults(func=cmd_demo_dataset)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"reasonlab: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
