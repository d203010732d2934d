import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from nonholo.cli import main, to_json


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_json_numbers_keep_full_precision():
    text = to_json({"a": 1.0, "b": 0.1, "c": float("nan"), "d": -0.0, "e": [1, True]})
    data = json.loads(text)
    assert data == {"a": 1.0, "b": 0.1, "c": None, "d": 0.0, "e": [1, True]}
    assert '"a": 1.0' in text and '"d": 0.0' in text


@pytest.mark.parametrize("name", ["particle", "ball", "integrable"])
def test_verify_passes(capsys, name):
    code, out, _ = run(capsys, "verify", "--model", name, "--points", "3")
    report = json.loads(out)
    assert code == 0, [c for c in report["checks"] if not c["passed"]]
    assert report["schema"] == 1 and report["passed"]
    assert report["config"]["model"] == name


def test_verify_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "verify", "--model", "particle", "--points", "3", "--seed", "7", "-o", str(a))[0] == 0
    assert run(capsys, "verify", "--model", "particle", "--points", "3", "--seed", "7", "-o", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("NONHOLO_SEED", "42")
    _, out, _ = run(capsys, "brackets", "--model", "particle", "--dump-gamma")
    assert json.loads(out)["config"]["seed"] == 42
    _, out2, _ = run(capsys, "brackets", "--model", "particle", "--dump-gamma", "--seed", "42")
    assert out == out2


def test_brackets_table(capsys):
    code, out, _ = run(capsys, "brackets", "--model", "particle", "--at", "0,1,0;0.5,1,0.5", "--table")
    assert code == 0
    table = json.loads(out)["table"]
    assert table["observables"] == ["x", "y", "z", "pi1", "pi2"]
    E = np.array(table["brackets"]["E"])
    assert E[3, 4] == pytest.approx(-0.5)  # {pi1, pi2}_E = -p_z
    assert E[0, 4] == pytest.approx(1.0) and E[2, 4] == pytest.approx(1.0)
    assert table["max_discrepancy"] <= 1e-12


def test_brackets_dump_gamma(capsys):
    code, out, _ = run(capsys, "brackets", "--model", "particle", "--at", "0,1,0;1,0,0", "--dump-gamma", "--project-initial")
    assert code == 0
    rep = json.loads(out)
    assert rep["x"][3:] == pytest.approx([0.5, 0.0, 0.5])
    assert np.allclose(rep["gamma"]["gamma"], [[0.5, 0, 0.5], [0, 1, 0], [0.5, 0, 0.5]])
    assert rep["gamma"]["rank"] == 2


def test_brackets_off_M_point_is_usage_error(capsys):
    code, _, err = run(capsys, "brackets", "--model", "particle", "--at", "0,1,0;1,0,0", "--table")
    assert code == 2 and "off M" in err


def test_simulate_csv(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, out, _ = run(
        capsys, "simulate", "--model", "ball", "--q0", "0,0,1.2,0.3,-0.4", "--p0", "0.1,0.2,0,0,0",
        "--project-initial", "--t-end", "0.05", "--dt", "0.01", "--csv", str(path),
    )
    summary = json.loads(out)
    assert code == 0 and summary["passed"] and summary["steps"] == 5
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x", "y", "theta", "phi", "psi", "p_x", "p_y", "p_theta", "p_phi", "p_psi",
                       "constraint_residual", "energy", "f_a", "f_b", "f_c"]
    assert len(rows) == 7
    assert float(rows[-1][0]) == pytest.approx(0.05)


def test_simulate_csv_to_stdout_zero_momentum(capsys):
    code, out, err = run(capsys, "simulate", "--model", "particle", "--q0", "0.5,0,0", "--p0", "0,0,0",
                         "--t-end", "0.03", "--dt", "0.01")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))[1:]
    assert len(rows) == 4
    assert all(r[1:] == rows[0][1:] for r in rows)
    assert json.loads(err)["status"] == "ok"


def test_simulate_off_M_start(capsys):
    code, _, err = run(capsys, "simulate", "--model", "particle", "--q0", "0,1,0", "--p0", "1,0,0")
    assert code == 2 and "off M" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--model", "particle", "--q0", "0,0,0"],
        ["simulate", "--model", "particle", "--q0", "0,0", "--p0", "0,0,0"],
        ["simulate", "--model", "particle", "--q0", "0,0,0", "--p0", "0,0,0", "--dt", "0"],
        ["verify", "--model", "unicycle"],
        ["verify", "--model", "ball", "--param", "mass=2"],
        ["hj-check", "--model", "particle", "--lambda", "no-such-form"],
        ["hj-check", "--model", "particle", "--lambda", "perturbed", "--grid", "w=0:1:3"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_hj_check_pass_and_fail(capsys):
    code, out, _ = run(capsys, "hj-check", "--model", "particle", "--lambda", "hj-solution", "--lambda-param", "mu=0.3")
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "hj-check", "--model", "ball", "--lambda", "perturbed")
    rep = json.loads(out)["report"]
    assert code == 1 and rep["r_gen_hj"] > 1e-3 and "r_gen_hj" in rep["worst"]


def test_hj_check_modes(capsys):
    assert run(capsys, "hj-check", "--model", "particle", "--lambda", "x-weighted")[0] == 0
    assert run(capsys, "hj-check", "--model", "particle", "--lambda", "x-weighted", "--mode", "classical")[0] == 1


def test_hj_check_from_file(capsys, tmp_path):
    f = tmp_path / "dx.json"
    f.write_text(json.dumps({"components": ["1", "0", "0"], "label": "dx"}))
    code, out, _ = run(capsys, "hj-check", "--model", "integrable", "--lambda", str(f), "--mode", "classical")
    assert code == 0 and json.loads(out)["lambda"] == "dx"


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "ball.cfg"
    cfg.write_text("m = 2.0\nr = 0.5\n")
    code, out, _ = run(capsys, "brackets", "--model", "ball", "--config", str(cfg), "--param", "I=0.3", "--dump-gamma")
    assert code == 0
    assert json.loads(out)["config"]["params"] == {"m": 2.0, "I": 0.3, "r": 0.5}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nonholo", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "hj-check" in proc.stdout
