"""
Tests for the pbs command line: exit codes, reports and file outputs
"""
import json
import re
from pathlib import Path

import pandas as pd
import pytest

from src.cli import build_parser, main

TOY_POINTS = "t=-0.5,x=1;t=-0.2,x=2"
TOY_GRID = "t:-0.2:-0.05:4,x:2:3:4"
ROOT = Path(__file__).resolve().parent.parent


def _json(capsys, argv):
    status = main(argv + ["--json", "-"])
    return status, json.loads(capsys.readouterr().out)


def test_verify_passes(capsys):
    assert main(["verify", "--solution", "x/sqrt(-2*t)", "--points", TOY_POINTS]) == 0
    assert "verify: PASS" in capsys.readouterr().out


def test_verify_fails_for_non_solution(capsys):
    status, report = _json(capsys, ["verify", "--solution", "x", "--points", TOY_POINTS])
    assert status == 1
    assert report["exit_status"] == 1
    assert report["checks"][0]["name"] == "pde-residual"
    assert not report["checks"][0]["passed"]


def test_verify_uses_seed_points_by_default(capsys):
    status, report = _json(capsys, ["verify", "--model", "hopf", "--solution", "x/(1-a*t)"])
    assert status == 0
    assert report["checks"][0]["points"] == 3


def test_parse_error_is_an_input_error(capsys):
    assert main(["verify", "--solution", "x/**", "--points", TOY_POINTS]) == 2
    assert "Error (ParseError)" in capsys.readouterr().err


def test_unknown_model_is_an_input_error(capsys):
    assert main(["verify", "--model", "burgers", "--solution", "x"]) == 2
    assert "toy" in capsys.readouterr().err


def test_missing_model_file(tmp_path, capsys):
    assert main(["verify", "--model-file", str(tmp_path / "none.json"), "--solution", "x"]) == 2


def test_all_points_out_of_domain_is_numeric(capsys):
    assert main(["verify", "--solution", "x/sqrt(-2*t)", "--points", "t=0.5,x=1;t=1,x=2"]) == 3
    assert "SamplesOutOfDomain" in capsys.readouterr().err


def test_transform_writes_csv_and_matches_closed_form(tmp_path, capsys):
    out = tmp_path / "pbs.csv"
    status, report = _json(capsys, ["transform", "--seed", "x/sqrt(-2*t)", "--g", "eta^2", "--grid", TOY_GRID,
                                    "--out", str(out), "--expect", "sqrt(-2 - x^2/(2*t))"])
    assert status == 0
    assert [c["name"] for c in report["checks"]] == ["pde-residual", "closed-form"]
    assert report["data"] == {"cells": 16, "masked": 0}
    assert report["outputs"] == [str(out)]
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["t", "x", "u", "tprime", "xprime", "delta", "residual", "reason"]
    assert len(frame) == 16


def test_transform_rejects_degenerate_seed(capsys):
    assert main(["transform", "--seed", "sqrt(2*(x+t))", "--g", "eta^2", "--grid", "t:0.1:0.2:3,x:1:2:3"]) == 1
    assert "U_x/U_t must not be constant" in capsys.readouterr().err


def test_transform_refuses_verification_only_model(capsys):
    assert main(["transform", "--model", "ghpf", "--seed", "exp((x0+x1)/sqrt(2))", "--g", "eta^2",
                 "--grid", "x0:0:1:3,x1:0:1:3"]) == 2


def test_json_report_is_deterministic(capsys):
    argv = ["hereditary", "--trials", "10", "--rng-seed", "7", "--json", "-"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first


def test_json_report_to_file(tmp_path, capsys):
    path = tmp_path / "report.json"
    assert main(["symmetry", "--sigma", "u_x", "--points", TOY_POINTS, "--json", str(path)]) == 0
    assert "symmetry: PASS" in capsys.readouterr().out
    assert json.loads(path.read_text())["command"] == "symmetry"


def test_non_symmetry_fails(capsys):
    assert main(["symmetry", "--sigma", "u", "--points", TOY_POINTS]) == 1


def test_invariant_candidate(capsys):
    status, report = _json(capsys, ["invariant", "--phi", "2*t + u_x^(-2)", "--points", TOY_POINTS])
    assert status == 0
    assert report["checks"][0]["name"] == "invariant-residual"


@pytest.mark.parametrize("kind", ["A", "B", "G"])
def test_functional_relations(capsys, kind):
    status, report = _json(capsys, ["invariant", "--kind", kind, "--constant", "2"])
    assert status == 0
    assert report["checks"][0]["name"] == f"{kind}-relation"


def test_hierarchy_levels(capsys):
    status, report = _json(capsys, ["hierarchy", "--levels", "2", "--points", TOY_POINTS])
    assert status == 0
    assert report["data"]["levels"][1:] == ["u_x", "0"]
    assert [c["name"] for c in report["checks"]] == ["K_0-symmetry", "K_1-symmetry", "K_2-symmetry"]


def test_catalog_listing(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    assert "toy: " in out and "gam3: " in out


def test_catalog_entry(capsys):
    status, report = _json(capsys, ["catalog", "gam3"])
    assert status == 0
    assert report["data"]["model"]["n"] == 2


def test_model_and_model_file_are_exclusive():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "--model", "toy", "--model-file", "m.json", "--solution", "x"])


def test_symmetry_on_explicit_background(capsys):
    assert main(["symmetry", "--model", "toy", "--sigma", "(u_x/u_t)^3*u_t", "--background", "x/sqrt(-2*t)",
                 "--points", TOY_POINTS]) == 0


def test_hereditary_example(capsys):
    status, report = _json(capsys, ["hereditary", "--model", "toy", "--G", "u*u_x", "--trials", "100",
                                    "--rng-seed", "42"])
    assert status == 0
    assert report["checks"][0]["points"] == 100
    assert report["checks"][0]["max_residual"] <= 1e-9


def test_env_example_keys_are_read():
    keys = re.findall(r"^(PBS_\w+)=", (ROOT / ".env.example").read_text(), flags=re.MULTILINE)
    consumers = (ROOT / "src" / "config.py").read_text() + (ROOT / "start_backend.sh").read_text()
    assert {"PBS_HOST", "PBS_PORT", "PBS_QUAD_MAX_SUBINTERVALS"} <= set(keys)
    assert [k for k in keys if k not in consumers] == []


def test_launch_script_checks_the_catalog_before_serving():
    script = (ROOT / "start_backend.sh").read_text()
    assert script.index("run_pbs.py\" catalog") < script.index("exec uvicorn")
    assert '--port "$PORT"' in script
