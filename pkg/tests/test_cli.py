import csv
import io
import json
import shutil

import pytest

from quic3.cli import RunConfig, emit_result, main
from quic3.report import main as bench_main, plot, problem_files, run_suite, to_csv


def test_run_config_validation():
    assert RunConfig().engine_config().qgen == "both"
    for bad in (dict(max_depth=-1), dict(query_timeout=0), dict(qgen="x"), dict(max_instances=0),
                dict(backend="carrier-pigeon")):
        with pytest.raises(ValueError):
            RunConfig(**bad)


def test_safe_exit_code_and_invariant(bench, tmp_path, capsys):
    out = tmp_path / "inv.smt2"
    rc = main([str(bench / "init_array.qtr"), "--emit-invariant", str(out), "--validate"])
    assert rc == 0
    text = capsys.readouterr().out
    assert text.startswith("verdict: safe")
    assert "validation: init=certified consecution=certified safety=certified" in text
    inv = out.read_text()
    assert "(declare-fun A () (Array Int Int))" in inv
    assert "(assert (forall ((v0 Int))" in inv


def test_cex_trace_has_length_plus_one_states(bench, capsys):
    rc = main([str(bench / "counter_reach.qtr"), "--json"])
    assert rc == 1
    rec = json.loads(capsys.readouterr().out)
    assert rec["verdict"] == "cex"
    assert len(rec["trace"]) == rec["length"] + 1


def test_json_stats_shape(bench, capsys):
    assert main([str(bench / "init_array.qtr"), "--json"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert {"depth", "lemmas", "inv", "time_s", "verdict", "invariant"} <= set(rec)
    assert rec["depth"] == 4 and isinstance(rec["time_s"], float)


def test_unknown_exit_code(bench, capsys):
    assert main([str(bench / "std_copy1.qtr"), "--qgen", "off", "--max-depth", "2"]) == 2
    assert "reached max depth" in capsys.readouterr().out


def test_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.qtr"
    bad.write_text("(declare-state x Int) (init (= y 0)) (trans true) (bad true)")
    assert main([str(bad)]) == 3
    assert main([str(tmp_path / "missing.qtr")]) == 3
    assert main([str(bad), "--max-depth", "-1"]) == 3
    assert "error:" in capsys.readouterr().err


def test_event_log(bench, tmp_path, capsys):
    log = tmp_path / "ev.jsonl"
    assert main([str(bench / "counter.qtr"), "--event-log", str(log)]) == 0
    rules = [json.loads(l)["rule"] for l in log.read_text().splitlines()]
    assert rules[-1] == "verdict"


def test_emit_result_formats(bench):
    from quic3.engine import EngineConfig, run
    from quic3.problem import load_problem

    p = load_problem(bench / "counter_reach.qtr")
    v, _ = run(p, EngineConfig())
    assert emit_result(v, p, "smt2-invariant").startswith("; no invariant")
    human = emit_result(v, p, "human")
    assert f"counterexample of length {v.length}" in human
    assert sum(l.strip().startswith("state ") for l in human.splitlines()) == v.length + 1
    with pytest.raises(ValueError):
        emit_result(v, p, "yaml")


def test_bench_report(bench, tmp_path, capsys):
    d = tmp_path / "b"
    d.mkdir()
    for name in ("counter", "counter_reach"):
        shutil.copy(bench / f"{name}.qtr", d)
        shutil.copy(bench / f"{name}.expected", d)
    files = problem_files(d)
    assert [f.stem for f in files] == ["counter", "counter_reach"]
    rows = run_suite(files, ["off", "both"], 10)
    assert [(r["problem"], r["qgen"], r["verdict"]) for r in rows] == [
        ("counter", "off", "safe"), ("counter", "both", "safe"),
        ("counter_reach", "off", "cex"), ("counter_reach", "both", "cex")]
    parsed = list(csv.DictReader(io.StringIO(to_csv(rows))))
    assert parsed[0]["verdict"] == "safe" and parsed[0]["expected"] == "safe"
    png = plot(rows, tmp_path / "r.png")
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    out_csv, out_png = tmp_path / "o.csv", tmp_path / "o.png"
    assert bench_main([str(d), "--csv", str(out_csv), "--plot", str(out_png)]) == 0
    assert out_csv.read_text().splitlines()[0] == "problem,qgen,verdict,depth,lemmas,inv,time_s,expected"
    assert out_png.exists()
    assert bench_main([str(tmp_path / "nothing")]) == 3
