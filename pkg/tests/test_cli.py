import json

import pytest

from reasonlab.backend import FaultPlan, FaultSpec
from reasonlab.cli import main
from reasonlab.corpus import SPECIAL_FILTER
from reasonlab.lang.oracle import oracle_trace
from reasonlab.lang.parser import parse
from reasonlab.trace import render_trace, write_traces

from conftest import FILTER_INPUT, MINUS_33_DECISION

TWO_FUNCS = "def helper(x):\n    return x + 1\n\n\ndef main(xs):\n    return [helper(x) for x in xs]\n"


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "data.jsonl"
    assert main(["demo-dataset", "--out", str(path), "--origins", "a,b"]) == 0
    return path


def test_filter(dataset, tmp_path, capsys):
    rows = [json.loads(line) for line in dataset.read_text().splitlines()]
    rows[0]["solutions"]["b"] = "def " + rows[0]["entry_point"] + "(*args):\n    return 0\n"
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert main(["filter", "--dataset", str(bad), "--out", str(tmp_path / "f")]) == 0
    retained = (tmp_path / "f" / "retained.jsonl").read_text().splitlines()
    drops = [json.loads(line) for line in (tmp_path / "f" / "drops.jsonl").read_text().splitlines()]
    assert len(retained) == len(rows) - 1
    assert drops[0]["id"] == rows[0]["id"] and drops[0]["origin"] == "b"
    assert "retained" in capsys.readouterr().out


def test_filter_missing_file(tmp_path, capsys):
    assert main(["filter", "--dataset", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 2
    assert "cannot read dataset" in capsys.readouterr().err


def test_run_clean(dataset, tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--dataset", str(dataset), "--strategy", "remind", "--out", str(out)]) == 0
    lines = (out / "accuracy.csv").read_text().splitlines()
    assert all(line.split(",")[3] == "1.000000" for line in lines[1:])


def test_run_with_faults(dataset, tmp_path, capsys):
    out = tmp_path / "r"
    code = main(["run", "--dataset", str(dataset), "--strategy", "cot,remind", "--origins", "a",
                 "--fault-rate", "0.4", "--seed", "1", "--out", str(out)])
    assert code == 1  # cot gets some instances wrong
    acc = {}
    for line in (out / "accuracy.csv").read_text().splitlines()[1:]:
        b, o, s, value, *_ = line.split(",")
        acc[s] = float(value)
    assert acc["remind"] > acc["cot"]
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    assert f"mock,a,remind,{acc['remind']:.6f}" in capsys.readouterr().out


def test_run_with_fault_plan_file(dataset, tmp_path):
    plan = FaultPlan().with_faults(SPECIAL_FILTER.source, FILTER_INPUT, FaultSpec("wrong_branch", MINUS_33_DECISION))
    plan.save(tmp_path / "plan.json")
    out = tmp_path / "r"
    main(["run", "--dataset", str(dataset), "--strategy", "cot", "--origins", "a",
          "--fault-plan", str(tmp_path / "plan.json"), "--out", str(out), "--transcripts"])
    rows = [json.loads(line) for line in (out / "verdicts.jsonl").read_text().splitlines()]
    wrong = [r for r in rows if not r["correct"]]
    assert [(r["instance"], r["predicted"]) for r in wrong] == [("specialFilter", "4")]


def test_mock_runs_are_reproducible(dataset, tmp_path):
    args = ["run", "--dataset", str(dataset), "--strategy", "cot,remind", "--origins", "b",
            "--fault-rate", "0.3", "--seed", "4", "--workers", "3"]
    main(args + ["--out", str(tmp_path / "x")])
    main(args + ["--out", str(tmp_path / "y")])
    for name in ("verdicts.jsonl", "accuracy.csv", "std.csv", "heatmap.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_live_without_credential_fails_first(tmp_path, monkeypatch, capsys):
    for var in ("REASONLAB_API_KEY", "OPENAI_API_KEY"):
        monkeypatch.delenv(var, raising=False)
    code = main(["run", "--backend", "live", "--dataset", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "API key" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_strategy_is_a_usage_error(dataset, tmp_path):
    assert main(["run", "--dataset", str(dataset), "--strategy", "magic", "--out", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_cfg(tmp_path):
    src = tmp_path / "prog.py"
    src.write_text(TWO_FUNCS)
    assert main(["cfg", str(src), "--out", str(tmp_path / "a")]) == 0
    assert main(["cfg", str(src), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["helper.dot", "main.dot"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    src.write_text("def broken(:\n")
    assert main(["cfg", str(src), "--out", str(tmp_path / "c")]) == 2


def _trace_file(tmp_path, text):
    path = tmp_path / "trace.txt"
    path.write_text(text)
    return path


def test_verify_trace(tmp_path, capsys):
    src = tmp_path / "sf.py"
    src.write_text(SPECIAL_FILTER.source)
    unit = parse(SPECIAL_FILTER.source)
    good = render_trace(oracle_trace(unit, "specialFilter", FILTER_INPUT))
    args = ["--args", "[[71, -2, -33, 75, 21, 19]]"]
    assert main(["verify-trace", str(src), str(_trace_file(tmp_path, good))] + args) == 0
    assert capsys.readouterr().out.strip() == "healthy"

    lines = good.splitlines()
    doctored = lines[:11] + ["STEP 12 | LINE 4 | STATE num=-33 | BRANCH true", "OUTPUT 4"]
    assert main(["verify-trace", str(src), str(_trace_file(tmp_path, "\n".join(doctored)))] + args) == 1
    out = capsys.readouterr().out
    assert "condition_mismatch" in out and "take the false edge" in out

    assert main(["verify-trace", str(src), str(_trace_file(tmp_path, "no trace here"))] + args) == 2


def test_verify_stored_traces(tmp_path, capsys):
    src = tmp_path / "sf.py"
    src.write_text(SPECIAL_FILTER.source)
    unit = parse(SPECIAL_FILTER.source)
    store = tmp_path / "traces.jsonl"
    write_traces(store, [oracle_trace(unit, "specialFilter", list(a)) for a in SPECIAL_FILTER.inputs])
    assert main(["verify-trace", str(src), str(store)]) == 0
    store.write_text('{"steps": 3}\n')
    assert main(["verify-trace", str(src), str(store)]) == 2


def test_verify_trace_needs_entry_for_several_functions(tmp_path):
    src = tmp_path / "two.py"
    src.write_text(TWO_FUNCS)
    trace = _trace_file(tmp_path, "STEP 1 | LINE 6 | STATE\nOUTPUT [2]\n")
    assert main(["verify-trace", str(src), str(trace)]) == 2
    assert main(["verify-trace", str(src), str(trace), "--entry", "main", "--args", "[[1]]"]) == 0
