import json
import subprocess
import sys
from pathlib import Path

import pytest

from adhocscan import __version__
from adhocscan.cli import main, render_slice

GOLDEN = Path(__file__).parent / "fixtures" / "golden"


@pytest.fixture(scope="module")
def golden_scan(tmp_path_factory):
    out = tmp_path_factory.mktemp("scan") / "golden.jsonl"
    assert main(["-q", "scan", "--root", str(GOLDEN), "--out", str(out)]) == 0
    return out


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "scan" in capsys.readouterr().out


def test_no_command_is_usage_error():
    assert main([]) == 2


def test_unknown_flag_is_usage_error():
    assert main(["scan", "--root", str(GOLDEN), "--out", "x.jsonl", "--bogus"]) == 2


def test_scan_golden(golden_scan):
    lines = [json.loads(x) for x in golden_scan.read_text().splitlines()]
    records = [x for x in lines if x.get("type") != "project_stats"]
    assert len(records) == 3
    assert {r["ef_name"] for r in records} == {
        "setup.parse_version", "scripts.jobserver_exec.__main__", "methods.get_compiler_version"}


def test_scan_csv(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["-q", "scan", "--root", str(GOLDEN), "--out", str(out), "--format", "csv"]) == 0
    assert len(out.read_text().splitlines()) == 4


def test_scan_missing_root(tmp_path):
    assert main(["-q", "scan", "--root", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 2


def test_scan_bad_table(tmp_path):
    table = tmp_path / "t.txt"
    table.write_text("not a table line\n")
    code = main(["-q", "scan", "--root", str(GOLDEN), "--out", str(tmp_path / "o"), "--api-table", str(table)])
    assert code == 2


def test_scan_jobs_must_be_positive(tmp_path):
    assert main(["scan", "--root", str(GOLDEN), "--out", str(tmp_path / "o"), "--jobs", "0"]) == 2


def test_report(golden_scan, tmp_path, capsys):
    out = tmp_path / "report.json"
    figs = tmp_path / "figs"
    assert main(["report", "--in", str(golden_scan), "--out", str(out), "--figures", str(figs)]) == 0
    doc = json.loads(out.read_text())
    assert doc["record_count"] == 3 and doc["project_prevalence"] == 1.0
    assert "split" in capsys.readouterr().out
    assert sorted(p.name for p in figs.iterdir()) == ["functions.png", "inputs.png", "sizes.png"]
    assert all(p.stat().st_size > 0 for p in figs.iterdir())


def test_report_missing_input(tmp_path):
    assert main(["report", "--in", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "r.json")]) == 2


def test_report_on_empty_scan(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    scan_out = tmp_path / "s.jsonl"
    assert main(["-q", "scan", "--root", str(empty), "--out", str(scan_out)]) == 0
    out = tmp_path / "r.json"
    assert main(["-q", "report", "--in", str(scan_out), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["record_count"] == 0 and doc["distributions"]["loc"] is None


def test_cluster(golden_scan, tmp_path):
    out = tmp_path / "c.json"
    figs = tmp_path / "cf"
    code = main(["-q", "cluster", "--in", str(golden_scan), "--k", "2", "--seed", "3", "--out", str(out),
                 "--sweep", "1:3", "--figures", str(figs)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["k"] == 2 and len(doc["assignments"]) == 3
    assert [s["k"] for s in doc["sweep"]] == [1, 2, 3]
    assert sorted(p.name for p in figs.iterdir()) == ["clusters.png", "inertia.png"]
    again = tmp_path / "c2.json"
    main(["-q", "cluster", "--in", str(golden_scan), "--k", "2", "--seed", "3", "--out", str(again),
          "--sweep", "1:3"])
    assert again.read_text() == out.read_text()


@pytest.mark.parametrize("k", ["0", "-1", "4"])
def test_cluster_bad_k(golden_scan, tmp_path, k):
    assert main(["-q", "cluster", "--in", str(golden_scan), "--k", k, "--out", str(tmp_path / "c.json")]) == 2


def test_cluster_bad_sweep(golden_scan, tmp_path):
    assert main(["cluster", "--in", str(golden_scan), "--k", "1", "--out", str(tmp_path / "c.json"),
                 "--sweep", "3:1"]) == 2


def test_show(golden_scan, capsys):
    records = [json.loads(x) for x in golden_scan.read_text().splitlines()]
    job = next(r for r in records if r.get("ef_name", "").endswith("__main__"))
    assert main(["show", "--in", str(golden_scan), "--id", job["slice_id"], "--context", "0"]) == 0
    out = capsys.readouterr().out
    marked = [ln for ln in out.splitlines() if ln.startswith(">")]
    assert [int(ln.split()[1]) for ln in marked] == job["slice_lines"]
    assert "flags = os.environ['MAKEFLAGS']" in marked[0]
    assert "... " in out


def test_show_unknown_id(golden_scan):
    assert main(["show", "--in", str(golden_scan), "--id", "nope"]) == 2


def test_show_missing_source(golden_scan, tmp_path, capsys):
    records = [json.loads(x) for x in golden_scan.read_text().splitlines()]
    rec = records[0]
    rec["source_path"] = str(tmp_path / "gone.py")
    moved = tmp_path / "moved.jsonl"
    moved.write_text(json.dumps(rec) + "\n")
    assert main(["show", "--in", str(moved), "--id", rec["slice_id"]]) == 2
    assert rec["slice_id"] in capsys.readouterr().out


def test_render_slice_context_and_elision():
    rec = {"slice_id": "p:m.py:2:0:s", "ef_name": "m.f", "loc": 2, "cyclo": 1, "input_source": "literal",
           "input_origin": "unknown", "position_cat": "beginning", "shotgun": False, "calls": [],
           "slice_lines": [2, 8], "ef_span": [1, 9]}
    lines = [f"line{i}" for i in range(1, 10)]
    text = render_slice(rec, lines, 1)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0].startswith("|    1") and body[1].startswith(">    2")
    assert "... 3 line(s)" in text
    assert body[-1].startswith("|    9")


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "adhocscan", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
