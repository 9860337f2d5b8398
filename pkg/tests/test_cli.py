import json
import subprocess
import sys
from pathlib import Path

import pytest

from overlapkit.cli import BUDGET_ENV, main

INPUTS = Path(__file__).resolve().parent.parent / "inputs"


def inp(name):
    return str(INPUTS / name)


def call(capsys, *args):
    code = main(list(args))
    text = capsys.readouterr().out
    return code, text


def call_json(capsys, *args):
    code, text = call(capsys, *args)
    report = json.loads(text)
    assert report["exit_code"] == code
    return code, report


@pytest.mark.parametrize(
    "name, kind",
    [
        ("two_site_pattern.json", "pattern"),
        ("loop_spec.json", "igraph"),
        ("tetrahedron.json", "hypergraph"),
        ("three_path.json", "structure"),
    ],
)
def test_validate_guesses_kind(capsys, name, kind):
    code, rep = call_json(capsys, "validate", "--input", inp(name))
    assert code == 0 and rep["kind"] == kind and rep["valid"]


def test_validate_reports_bad_input(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert call_json(capsys, "validate", "--input", str(bad))[0] == 2
    odd = tmp_path / "odd.json"
    odd.write_text(json.dumps({"something": 1}))
    assert call_json(capsys, "validate", "--input", str(odd))[0] == 2
    assert call_json(capsys, "validate", "--input", str(tmp_path / "missing.json"))[0] == 2


def test_usage_errors_exit_two(capsys):
    assert main(["cym"]) == 2
    assert main(["nonsense"]) == 2
    code, rep = call_json(capsys, "realise", "--spec", inp("loop_spec.json"), "--n", "1")
    assert code == 2 and "at least 2" in rep["error"]
    capsys.readouterr()


def test_cym_writes_groupoid_and_verifies_it(capsys, tmp_path):
    code, rep = call_json(capsys, "cym", "--spec", inp("loop_spec.json"), "--out", str(tmp_path))
    assert code == 0 and rep["axioms"]["ok"] and rep["compatible"]["ok"]
    assert {p.name for p in tmp_path.iterdir()} == {"groupoid.json", "graph.dot", "report.json"}
    assert json.loads((tmp_path / "report.json").read_text()) == rep
    code, again = call_json(capsys, "verify", "--bundle", str(tmp_path / "groupoid.json"))
    assert again["kind"] == "groupoid" and again["axioms"]["ok"]


def test_dot_output(capsys):
    code, text = call(capsys, "cym", "--spec", inp("loop_spec.json"), "--format", "dot")
    assert code == 0 and text.lstrip().startswith(("digraph", "graph"))
    code, text = call(capsys, "analyze", "--input", inp("tetrahedron.json"), "--format", "dot")
    assert code == 0 and "--" in text


def test_env_budget(capsys, monkeypatch):
    monkeypatch.setenv(BUDGET_ENV, "2")
    code, rep = call_json(capsys, "cym", "--spec", inp("loop_spec.json"))
    assert code == 3 and rep["partial"]
    # an explicit flag wins over the environment
    code, _ = call_json(capsys, "cym", "--spec", inp("loop_spec.json"), "--budget", "1000")
    assert code == 0
    monkeypatch.setenv(BUDGET_ENV, "lots")
    assert call_json(capsys, "cym", "--spec", inp("loop_spec.json"))[0] == 2


def test_boost_pattern_and_spec(capsys):
    code, rep = call_json(capsys, "boost", "--pattern", inp("two_site_pattern.json"))
    assert code == 0 and rep["booster"]["certified"] and rep["recheck"]["acyclic"]["ok"]
    code, rep = call_json(capsys, "boost", "--spec", inp("loop_spec.json"), "--n", "3")
    assert code == 0 and rep["recheck"]["compatible"]["ok"]


def test_cover_verify_round_trip(capsys, tmp_path):
    tri = tmp_path / "tri.json"
    tri.write_text(json.dumps({"vertices": [0, 1, 2], "hyperedges": [[0, 1], [1, 2], [2, 0]]}))
    out = tmp_path / "out"
    code, rep = call_json(capsys, "cover", "--input", str(tri), "--n", "3", "--early-exit", "--out", str(out))
    assert code == 0 and rep["covering"]["ok"] and rep["strict"]["ok"] and rep["acyclicity"]["ok"]
    bundle = out / "covering.json"
    assert call_json(capsys, "verify", "--bundle", str(bundle))[0] == 0
    # reuse the written groupoid instead of boosting again
    code, rep2 = call_json(capsys, "cover", "--input", str(tri), "--groupoid", str(out / "groupoid.json"), "--n", "3")
    assert code == 0 and rep2["cover_vertices"] == rep["cover_vertices"]


def test_verify_catches_tampering(capsys, tmp_path):
    tri = tmp_path / "tri.json"
    tri.write_text(json.dumps({"vertices": [0, 1, 2], "hyperedges": [[0, 1], [1, 2], [2, 0]]}))
    call_json(capsys, "cover", "--input", str(tri), "--n", "3", "--early-exit", "--out", str(tmp_path))
    data = json.loads((tmp_path / "covering.json").read_text())
    data["vertex_map"] = [[v, 0] for v, _ in data["vertex_map"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert call_json(capsys, "verify", "--bundle", str(bad))[0] == 1


def test_cover_budget_exit(capsys):
    code, rep = call_json(capsys, "cover", "--input", inp("tetrahedron.json"), "--n", "3", "--budget", "200")
    assert code == 3 and rep["partial"]


def test_realise_and_verify(capsys, tmp_path):
    code, rep = call_json(capsys, "realise", "--spec", inp("loop_spec.json"), "--out", str(tmp_path))
    assert code == 0 and rep["realisation"]["ok"]
    assert call_json(capsys, "verify", "--bundle", str(tmp_path / "realisation.json"))[0] == 0
    code, rep = call_json(capsys, "realise", "--spec", inp("loop_spec.json"), "--n", "3", "--early-exit")
    assert code == 0 and rep["acyclicity"]["ok"]


def test_realise_budget_names_stage(capsys):
    code, rep = call_json(capsys, "realise", "--spec", inp("two_mode_spec.json"))
    assert code == 3 and "stage" in rep["where"]


def test_eppa_methods_and_verify(capsys, tmp_path):
    for method in ("excursion", "generic"):
        out = tmp_path / method
        code, rep = call_json(
            capsys, "eppa", "--structure", inp("three_path.json"), "--partials", inp("three_path_partials.json"),
            "--method", method, "--out", str(out),
        )
        assert code == 0 and rep["solution"]["ok"]
        assert call_json(capsys, "verify", "--bundle", str(out / "solution.json"))[0] == 0
    data = json.loads((tmp_path / "excursion" / "solution.json").read_text())
    assert data["method"] == "excursion" and len(data["structure"]["universe"]) == 6
    f = data["automorphisms"][0]
    data["automorphisms"][0] = [[x, x] for x, _ in f]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, rep = call_json(capsys, "verify", "--bundle", str(bad))
    assert code == 1 and not rep["solution"]["ok"]


def test_eppa_rejects_non_isomorphism(capsys, tmp_path):
    ps = tmp_path / "ps.json"
    ps.write_text(json.dumps([{"a": "c", "b": "a"}]))
    assert call_json(capsys, "eppa", "--structure", inp("three_path.json"), "--partials", str(ps))[0] == 2
    ps.write_text(json.dumps([{"a": "q"}]))
    assert call_json(capsys, "eppa", "--structure", inp("three_path.json"), "--partials", str(ps))[0] == 2


def test_eppa_two_partials_exhausts_budget(capsys):
    code, rep = call_json(capsys, "eppa", "--structure", inp("three_path.json"), "--partials", inp("three_path_two_partials.json"))
    assert code == 3 and rep["partial"]


def test_analyze(capsys):
    code, rep = call_json(capsys, "analyze", "--input", inp("tetrahedron.json"), "--n", "4")
    assert code == 0 and not rep["acyclicity"]["ok"] and rep["tree_decomposition"] is None
    code, rep = call_json(capsys, "analyze", "--input", inp("tetrahedron.json"), "--n", "3")
    assert rep["acyclicity"]["ok"]


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "overlapkit.cli", "validate", "--input", inp("three_path.json")], capture_output=True, text=True, timeout=60)
    assert r.returncode == 0 and json.loads(r.stdout)["kind"] == "structure"
