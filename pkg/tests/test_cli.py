import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from torus_resonances.cli import (
    EXIT_CONFIG,
    EXIT_GUARD,
    EXIT_NUMERICAL,
    EXIT_OK,
    ExperimentConfig,
    execute,
    main,
    sidecar_path,
    write_atomic,
)


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(["--out", str(out), *map(str, args)])
    return code, out


def load(path):
    return json.loads(path.read_text())


def test_spectrum_report(tmp_path):
    code, out = run(tmp_path, "--command", "spectrum", "--N", 8, "--eps", 0.3, "--k", 0.01)
    assert code == EXIT_OK
    rep = load(out)
    assert set(rep) >= {"config", "meta", "method", "eigenvalues", "methods", "method_agreement", "skipped"}
    ev = rep["eigenvalues"]
    assert set(ev[0]) == {"re", "im", "modulus", "stable"}
    assert abs(1 - complex(ev[0]["re"], ev[0]["im"])) < 1e-8
    assert sum(e["stable"] for e in ev) >= 5
    assert set(rep["methods"]) == {"iteration", "chord_truncation", "dense"}
    assert rep["method_agreement"] < 1e-6
    assert rep["config"] == {"command": "spectrum", "N": 8, "eps": 0.3, "k": 0.01, "k2": None,
                             "kiter": 12, "L": None, "T": 30, "seed": None, "format": "json",
                             "late_window": None, "early_window": None}


def test_spectrum_unitary_regime(tmp_path):
    code, out = run(tmp_path, "--command", "spectrum", "--N", 8, "--eps", 0, "--k", 0.01)
    assert code == EXIT_OK
    rep = load(out)
    assert rep["unitary_regime"] is True
    assert all(abs(e["modulus"] - 1) < 1e-8 for e in rep["eigenvalues"])
    assert rep["max_unimodular_deviation"] < 1e-8
    assert "iteration" in rep["skipped"]


def test_spectrum_guard_skips_dense(tmp_path):
    code, out = run(tmp_path, "--command", "spectrum", "--N", 20, "--eps", 0.3)
    assert code == EXIT_OK
    rep = load(out)
    assert "dense" in rep["skipped"] and rep["method"] == "chord_truncation"


def test_guard_refusal_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("TORUS_RESONANCES_CLASSICAL_GRID_LIMIT", "8")
    code, out = run(tmp_path, "--command", "classical", "--L", 16, "--eps", 0.1)
    assert code == EXIT_GUARD
    assert not out.exists()
    monkeypatch.setenv("TORUS_RESONANCES_CHORD_LIMIT", "4")
    monkeypatch.setenv("TORUS_RESONANCES_DENSE_LIMIT", "4")
    code, out = run(tmp_path, "--command", "spectrum", "--N", 8, "--eps", 0)
    assert code == EXIT_GUARD
    assert not out.exists()


@pytest.mark.parametrize("args", [
    ["--command", "spectrum", "--N", "8", "--eps", "abc"],
    ["--command", "spectrum", "--eps", "0.1"],
    ["--command", "spectrum", "--N", "1"],
    ["--command", "spectrum", "--N", "8", "--eps", "-0.1"],
    ["--command", "spectrum", "--N", "8", "--k", "-1"],
    ["--command", "evolve", "--N", "8", "--T", "0"],
    ["--command", "echo", "--N", "8"],
    ["--command", "compare", "--N", "8", "--eps", "0.2"],
    ["--command", "classical", "--L", "16", "--eps", "0"],
    ["--command", "nonsense", "--N", "8"],
    ["--command", "spectrum", "--N", "8", "--kiter", "1"],
    ["--command", "evolve", "--N", "8", "--T", "5", "--late-window", "2", "9"],
    ["--command", "spectrum", "--N", "8", "--unknown", "1"],
])
def test_config_errors(tmp_path, args):
    out = tmp_path / "x.json"
    assert main(["--out", str(out), *args]) == EXIT_CONFIG
    assert list(tmp_path.iterdir()) == []


def test_missing_out_and_unwritable_directory(tmp_path):
    assert main(["--command", "spectrum", "--N", "8"]) == EXIT_CONFIG
    assert main(["--command", "spectrum", "--N", "8", "--out", str(tmp_path / "no" / "x.json")]) == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    import torus_resonances.cli as cli

    def boom(cfg):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(cli, "run_spectrum", boom)
    code, out = run(tmp_path, "--command", "spectrum", "--N", 8)
    assert code == EXIT_NUMERICAL
    assert not out.exists()


def test_evolve_csv_and_sidecar(tmp_path):
    code, out = run(tmp_path, "--command", "evolve", "--N", 8, "--eps", 0.2, "--k", 0.01, "--T", 1,
                    name="run.csv")
    assert code == EXIT_OK
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["n", "autocorrelation", "linear_entropy", "linear_entropy_subtracted"]
    assert [r[0] for r in rows[1:]] == ["0", "1"]
    assert float(rows[1][2]) == pytest.approx(0, abs=1e-12)
    side = load(tmp_path / "run.csv.json")
    assert side["config"]["T"] == 1 and side["states"] == 10 and side["seed"] == 0
    assert set(side) >= {"slopes", "expected_slopes", "references", "windows"}
    assert side["references"]["lyapunov_exponent"] == pytest.approx(0.9624236501192069)
    # one step is too short for any fit
    assert side["slopes"]["autocorrelation"]["slope"] is None


def test_echo_full_precision(tmp_path):
    code, out = run(tmp_path, "--command", "echo", "--N", 16, "--eps", 0.15, "--k", 0.01, "--k2", 0.02,
                    "--T", 12, "--seed", 3, name="echo.csv")
    assert code == EXIT_OK
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0][-1] == "loschmidt"
    assert len(rows) == 14
    value = rows[3][1]
    assert float(repr(float(value))) == float(value)
    assert len(value.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15
    side = load(tmp_path / "echo.csv.json")
    assert side["seed"] == 3
    assert side["references"]["ln_lambda1_prime"] < 0
    assert side["slopes"]["loschmidt"]["slope"] == pytest.approx(side["expected_slopes"]["loschmidt"], rel=0.1)


def test_evolve_json_format(tmp_path):
    code, out = run(tmp_path, "--command", "evolve", "--N", 8, "--eps", 0.2, "--T", 6, "--format", "json")
    assert code == EXIT_OK
    rep = load(out)
    assert len(rep["series"]["autocorrelation"]) == 7
    assert not (tmp_path / "out.json").exists()


def test_window_overrides(tmp_path):
    code, out = run(tmp_path, "--command", "evolve", "--N", 8, "--eps", 0.2, "--T", 10,
                    "--late-window", 2, 8, "--early-window", 0, 3, name="w.csv")
    assert code == EXIT_OK
    side = load(tmp_path / "w.csv.json")
    assert side["windows"]["autocorrelation"] == [2, 8]
    assert side["windows"]["linear_entropy_early"] == [0, 3]


def test_classical_report(tmp_path):
    code, out = run(tmp_path, "--command", "classical", "--L", 24, "--eps", 0.15, "--k", 0.01)
    assert code == EXIT_OK
    rep = load(out)
    assert rep["method"] == "dense"
    assert rep["eigenvalues"][0]["modulus"] == pytest.approx(1, abs=1e-8)
    assert rep["config"]["L"] == 24


def test_compare_fields(tmp_path):
    code, out = run(tmp_path, "--command", "compare", "--N", 32, "--L", 32, "--eps", 0.15, "--k", 0.01)
    assert code == EXIT_OK
    rep = load(out)
    assert set(rep) >= {"quantum", "classical", "diff", "config"}
    assert rep["diff"][0]["rank"] == 0 and rep["diff"][0]["modulus_difference"] == pytest.approx(0, abs=1e-8)
    assert set(rep["diff"][1]) == {"rank", "modulus_difference", "relative"}


def test_compare_depolarizing_limit(tmp_path):
    code, out = run(tmp_path, "--command", "compare", "--N", 16, "--L", 16, "--eps", 2.0, "--k", 0)
    assert code == EXIT_OK
    rep = load(out)
    assert len(rep["quantum"]) == 1 and len(rep["classical"]) == 1
    assert rep["quantum"][0]["modulus"] == pytest.approx(1, abs=1e-8)
    assert rep["classical"][0]["modulus"] == pytest.approx(1, abs=1e-8)


def test_spectrum_csv(tmp_path):
    code, out = run(tmp_path, "--command", "spectrum", "--N", 6, "--eps", 0.3, "--format", "csv",
                    name="s.csv")
    assert code == EXIT_OK
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["method", "rank", "re", "im", "modulus", "stable"]
    assert {r[0] for r in rows[1:]} == {"iteration", "chord_truncation", "dense"}
    assert load(tmp_path / "s.csv.json")["config"]["format"] == "csv"


@pytest.mark.parametrize("args", [
    ["--command", "spectrum", "--N", "8", "--eps", "0.3", "--k", "0.01"],
    ["--command", "evolve", "--N", "12", "--eps", "0.15", "--k", "0.01", "--T", "15", "--seed", "5"],
    ["--command", "compare", "--N", "16", "--L", "16", "--eps", "0.2", "--k", "0.01"],
])
def test_byte_identical_reruns(tmp_path, args):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert main([*args, "--out", str(a / "r")]) == EXIT_OK
    assert main([*args, "--out", str(b / "r")]) == EXIT_OK
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_execute_is_side_effect_free(tmp_path):
    cfg = ExperimentConfig(command="spectrum", N=4, eps=0.3)
    files = execute(cfg, str(tmp_path / "r.json"))
    assert list(files) == [str(tmp_path / "r.json")]
    assert list(tmp_path.iterdir()) == []
    write_atomic(files)
    assert [p.name for p in tmp_path.iterdir()] == ["r.json"]
    assert sidecar_path("x.csv") == "x.csv.json"


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "torus_resonances", "--command", "spectrum", "--N", "4",
                           "--eps", "0.3", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load(out)["meta"]["N"] == 4
    proc = subprocess.run([sys.executable, "-m", "torus_resonances", "--command", "spectrum",
                           "--out", str(out), "--N", "x"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "configuration error" in proc.stderr
