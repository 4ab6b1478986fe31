from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest
from conftest import make_doc

from switchbench import cli
from switchbench.instances import bundled_path

STEP_DOWN = str(bundled_path("step_down"))


def write(tmp_path, doc, name="p.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_validate_ok(capsys):
    assert cli.main(["validate", STEP_DOWN]) == 0


def test_validate_gamma_zero(tmp_path, capsys):
    doc = make_doc(gamma=0.0, costs={"1->2": {"v0": 0.0}, "2->1": {"v0": 0.0}})
    assert cli.main(["validate", write(tmp_path, doc)]) == 2
    assert "A" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert cli.main(["validate", str(path)]) == 1
    assert cli.main(["solve", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1


def test_solve_tree(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["solve", STEP_DOWN, "--out", str(out), "--quiet"]) == 0
    rows = list(csv.DictReader(open(out / "values.csv")))
    first = [r for r in rows if r["layer"] == "0" and r["mode"] == "1"][0]
    assert float(first["Y"]) == 0.3
    assert {"values.csv", "jumps.csv", "summary.json", "manifest.json"} <= {f.name for f in out.iterdir()}
    assert json.loads((out / "summary.json").read_text())["y0"] == [0.3, 1.0]


def test_solve_picard_log(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["solve", str(bundled_path("cosh")), "--method", "picard", "--out", str(out), "--quiet"]) == 0
    recs = [json.loads(s) for s in (out / "picard_log.jsonl").read_text().splitlines()]
    assert recs[-1]["distance"] <= 1e-10 and recs[-1]["seconds"] is None


def test_solve_repeat_is_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert cli.main(["solve", str(bundled_path("coupled_step")), "--method", "picard",
                         "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    for f in outs[0].iterdir():
        assert f.read_bytes() == (outs[1] / f.name).read_bytes(), f.name


def test_solve_capped_and_monotone(tmp_path):
    assert cli.main(["solve", STEP_DOWN, "--method", "capped", "--cap", "1", "--out", str(tmp_path / "a"),
                     "--quiet"]) == 0
    assert cli.main(["solve", STEP_DOWN, "--method", "monotone", "--out", str(tmp_path / "b"), "--quiet"]) == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())["y0"]
    b = json.loads((tmp_path / "b" / "summary.json").read_text())["y0"]
    assert a[0] == 0.3 and b[0] == 0.3


def test_solve_hjb(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["solve", str(bundled_path("step_sigma")), "--method", "hjb", "--out", str(out),
                     "--quiet"]) == 0
    assert (out / "residuals.csv").exists()


def test_hjb_needs_one_dimension(tmp_path, capsys):
    doc = make_doc(r=2, x0=[0.0, 0.0], diffusion={"b": {"components": [0.0, 0.0]},
                                                    "sigma": {"components": [0.0, 0.0]}, "lipschitz": 0.0})
    assert cli.main(["solve", write(tmp_path, doc), "--method", "hjb", "--out", str(tmp_path / "o")]) == 2


def test_crosscheck_file(tmp_path):
    out = tmp_path / "c"
    assert cli.main(["crosscheck", STEP_DOWN, "--only", "1,2,4", "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "crosscheck.json").read_text())
    assert rep["status"] == "PASS"
    assert [c["status"] for c in rep["criteria"]] == ["PASS"] * 3


def test_crosscheck_rejects_invalid(tmp_path, capsys):
    doc = make_doc(h=[1.0, 0.0], gamma=0.1, costs={"1->2": {"v0": 0.1}, "2->1": {"v0": 0.1}})
    assert cli.main(["crosscheck", write(tmp_path, doc), "--only", "1"]) == 2
    assert "no solver was run" in capsys.readouterr().err


def test_crosscheck_oversize_skips(tmp_path):
    doc = make_doc(psi=[0.0, 1.0], diffusion={"b": 0.0, "sigma": 1.0}, grids={"max_dt": 0.1})
    out = tmp_path / "c"
    assert cli.main(["crosscheck", write(tmp_path, doc), "--only", "1", "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "crosscheck.json").read_text())
    assert rep["criteria"][0]["status"] == "SKIPPED"


def test_policy(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["policy", str(bundled_path("switch_now")), "--eps", "0.01", "--out", str(out),
                     "--quiet"]) == 0
    lines = (out / "strategies.csv").read_text().splitlines()
    assert lines[0] == "path_id,layer,time,from_mode,to_mode,cost_paid" and len(lines) == 2
    summ = json.loads((out / "policy_summary.json").read_text())
    assert summ["J"] == summ["Y0"] == 1.5 and summ["eps_optimal"] and summ["max_switches"] <= summ["bound"]
    assert cli.main(["policy", STEP_DOWN, "--eps", "0", "--out", str(out)]) == 2


def test_simulate(tmp_path):
    out = tmp_path / "s"
    args = ["simulate", str(bundled_path("step_sigma")), "--paths", "200", "--seed", "4", "--out"]
    assert cli.main(args + [str(out), "--quiet"]) == 0
    assert cli.main(args + [str(tmp_path / "t"), "--quiet"]) == 0
    assert (out / "paths.bin").read_bytes() == (tmp_path / "t" / "paths.bin").read_bytes()
    mom = json.loads((out / "moments.json").read_text())
    assert mom["p2"]["n_paths"] == 200 and mom["p4"]["p_exp"] == 4
