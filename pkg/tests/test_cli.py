import json

import pytest
from helpers import random_records, write_records

from fairalloc import io
from fairalloc.cli import run
from fairalloc.fixtures import fixture_b, fixture_c
from fairalloc.policy import Policy, Scope


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, m in (("B", fixture_b()), ("C", fixture_c())):
        p = tmp_path / f"fixture{name}.json"
        p.write_text(io.dumps(io.population_to_json(m)))
        paths[name] = str(p)
    return tmp_path, paths


def test_check_compat_fixture_c(files, capsys):
    _, p = files
    assert run(["check-compat", "--model", p["C"], "--prop", "4", "--budget", "1"]) == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == "INFEASIBLE"
    assert abs(doc["residual_disparity"] - 0.12) <= 1e-9
    assert [r["q"] for r in doc["closest_policy"]["table"]] == [0.0, 1.0]


def test_synthesize_fixture_b(files):
    tmp, p = files
    out = tmp / "res.json"
    code = run(["synthesize", "--model", p["B"], "--scope", "global", "--budget", "1",
                "--constraints", "sp-alloc,sp-outcome", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert abs(doc["policy"]["table"][0]["q"] - 0.5) <= 1e-9
    io.check(doc, io.RESULT_SCHEMA, "result")


def test_audit_empty_records(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("id,group,l0,l1,recommended,received,outcome\n")
    assert run(["audit", "--records", str(p), "--legit", "l0"]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "dataset empty" in err[0]


def test_audit_records_and_markdown(tmp_path):
    import numpy as np

    rows = random_records(np.random.default_rng(0), n=400)
    csv_path = tmp_path / "r.csv"
    write_records(csv_path, rows)
    out, md = tmp_path / "a.json", tmp_path / "a.md"
    code = run(["audit", "--records", str(csv_path), "--legit", "l0l1", "--out", str(out), "--md", str(md)])
    doc = json.loads(out.read_text())
    assert code == (0 if doc["satisfied"] else 2)
    assert [r["definition"] for r in doc["reports"]] == list(range(1, 9))
    assert all(r["eps"] == 0.02 for r in doc["reports"])
    assert "## Outcomes" in md.read_text()


def test_audit_model_with_policy(files, tmp_path, capsys):
    _, p = files
    pol = tmp_path / "pol.json"
    pol.write_text(io.dumps(io.policy_to_json(Policy(Scope.GLOBAL, {(): 0.5}))))
    assert run(["audit", "--model", p["B"], "--policy", str(pol)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["satisfied"]


def test_outputs_byte_identical(files, capsys):
    _, p = files
    run(["verify", "--prop", "4", "--trials", "5", "--seed", "2"])
    first = capsys.readouterr().out
    run(["verify", "--prop", "4", "--trials", "5", "--seed", "2"])
    assert capsys.readouterr().out == first
    run(["check-compat", "--model", p["C"], "--prop", "2"])
    a = capsys.readouterr().out
    run(["check-compat", "--model", p["C"], "--prop", "2"])
    assert capsys.readouterr().out == a


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("FAIRALLOC_SEED", "17")
    run(["generate", "--groups", "3"])
    a = capsys.readouterr().out
    run(["generate", "--groups", "3", "--seed", "17"])
    assert capsys.readouterr().out == a
    monkeypatch.setenv("FAIRALLOC_SEED", "x")
    assert run(["generate"]) == 3


def test_verify_dominance_and_worked_example(capsys):
    assert run(["verify", "--dominance", "lx,lg", "--trials", "10", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["summary"]["strict_witnesses"] >= 1
    assert doc["witnesses"][0]["source"] == "fixture F"
    assert run(["verify", "--worked-example"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


@pytest.mark.parametrize("argv", [
    ["synthesize", "--model", "/nonexistent.json"],
    ["verify", "--dominance", "lg,l0"],
    ["verify", "--prop", "3"],
    ["synthesize", "--model", "X", "--bogus"],
    ["generate", "--fixture", "Z"],
])
def test_input_errors_exit_3(argv, capsys):
    assert run(argv) == 3
    assert capsys.readouterr().err.startswith("error:")


def test_invalid_model_one_line_per_violation(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"cells": [{"group": "g", "covariate": "x", "l0": 0, "l1": 0,
                                        "mass": 0.5, "p0": 0.5, "p1": 0.4}]}))
    assert run(["check-compat", "--model", str(p), "--prop", "1"]) == 3
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 2


def test_schema_violation(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"cells": [{"group": "g"}]}))
    assert run(["synthesize", "--model", str(p)]) == 3
    assert "required property" in capsys.readouterr().err
