import json
import subprocess
import sys

import pytest

from errcal.cli import main
from errcal.error_models import generate, get_scenario


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    names = capsys.readouterr().out.split()
    assert names == ["scenario1_bx1", "scenario1_bx5", "scenario2", "scenario3_mixture",
                     "scenario3_lognormal", "whi"]


def test_unknown_scenario_exit_2(capsys):
    assert main(["fit", "--scenario", "nope", "--methods", "naive"]) == 2
    err = capsys.readouterr().err
    assert "scenario1_bx1" in err and "whi" in err


@pytest.mark.parametrize("argv", [
    [],
    ["simulate", "--methods", "true"],
    ["simulate", "--scenario", "scenario2", "--methods", "rc_case3"],
    ["simulate", "--scenario", "scenario2", "--methods", "true", "--replicates", "0"],
    ["fit", "--scenario", "scenario2", "--methods", "naive", "--variance", "jackknife"],
    ["fit", "--scenario", "scenario2"],
    ["fit", "--scenario", "scenario2", "--methods", "naive", "--set", "novalue"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_computation_error_prints_diagnostic(capsys):
    code = main(["fit", "--scenario", "whi", "--set", "subset_n=3", "--set", "cohort_n=100",
                 "--methods", "rc_case3"])
    assert code == 1
    assert "InsufficientData" in capsys.readouterr().err


def test_invalid_override_is_diagnostic(capsys):
    assert main(["fit", "--scenario", "scenario2", "--set", "rho_xz=[[3]]", "--methods", "naive"]) == 1
    assert "InvalidScenario" in capsys.readouterr().err


def test_fit_json_bootstrap(capsys):
    assert main(["fit", "--scenario", "whi", "--seed", "1", "--set", "cohort_n=2000", "--set", "subset_n=200",
                 "--methods", "rc_case3", "--variance", "bootstrap:20", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["method"] == "rc_case3"
    assert doc["variance_method"] == "bootstrap:20"
    assert len(doc["se"]) == 3 and all(s > 0 for s in doc["se"])


def test_fit_records_file(tmp_path, capsys):
    d = generate(get_scenario("scenario2").with_overrides({"design": "validation"}), 0)
    path = tmp_path / "records.json"
    path.write_text(json.dumps([r.to_dict() for r in d.records()]))
    assert main(["fit", "--data", str(path), "--methods", "naive,rc_case2", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "scenario,method,coef,estimate,se"
    assert len(lines) == 7


def test_simulate_csv_byte_identical(tmp_path):
    args = ["simulate", "--scenario", "scenario1_bx1", "--methods", "true,naive,rc_case1",
            "--replicates", "6", "--subset-sizes", "25,100", "--seed", "7", "--threads", "1"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args[:-2] + ["--threads", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "scenario,n_subset,method,coef,pct_bias,se,ase,mse,cp,n_failed"
    assert len(lines) == 1 + 2 * 3 * 2


def test_simulate_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("ERRCAL_THREADS", "1")
    assert main(["simulate", "--scenario", "scenario2", "--methods", "naive", "--replicates", "2",
                 "--set", "error.rho_TTtilde=[0.5]", "--format", "json"]) == 0
    docs = json.loads(capsys.readouterr().out)
    assert docs[0]["n_subset"] == 200


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "errcal", "list-scenarios"], capture_output=True, text=True)
    assert out.returncode == 0 and "whi" in out.stdout
