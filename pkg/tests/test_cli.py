import csv
import json
import subprocess

import numpy as np
import pytest

from fkmc import PathEnsemble
from fkmc.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_OK, main

INTERVAL = """
[process]
kind = "brownian"
domain = {box = {lo = [0.0], hi = [1.0]}}
[mesh]
lo = [0.0]
hi = [1.0]
points = [5]
[mc]
n_paths = 200
dt = 1e-3
"""


def _cfg(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_resolvent_of_zero_is_zero(tmp_path):
    cfg = _cfg(tmp_path, INTERVAL + '[resolvent]\nf = 0\n')
    assert main(["resolvent", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
    rows = _read_csv(tmp_path / "o" / "estimate.csv")
    assert rows[0][0] == "x_1" and len(rows) == 6
    col = rows[0].index("mean")
    assert all(float(r[col]) == 0.0 for r in rows[1:])


def test_resolvent_poisson_and_semigroup(tmp_path):
    cfg = _cfg(tmp_path, INTERVAL + '[resolvent]\nf = 1\n')
    assert main(["resolvent", "--config", cfg, "--out", str(tmp_path / "r"), "--paths", "2000"]) == 0
    rows = _read_csv(tmp_path / "r" / "estimate.csv")
    col = rows[0].index("mean")
    assert abs(float(rows[3][col]) - 0.25) < 0.03
    cfg2 = _cfg(tmp_path, INTERVAL + '[resolvent]\noperator = "semigroup"\nt = 0.05\nf = 1\n', "s.toml")
    assert main(["resolvent", "--config", cfg2, "--out", str(tmp_path / "s")]) == 0
    cfg3 = _cfg(tmp_path, INTERVAL + '[resolvent]\noperator = "semigroup"\nf = 1\n', "t.toml")
    assert main(["resolvent", "--config", cfg3, "--out", str(tmp_path / "t")]) == EXIT_CONFIG


def test_simulate_writes_replayable_ensemble(tmp_path):
    cfg = _cfg(tmp_path, INTERVAL + "[simulate]\nstart = [0.5]\n")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--paths", "50"]) == EXIT_OK
    ens = PathEnsemble.load(out / "ensemble.fke")
    summary = json.loads((out / "simulate.json").read_text())
    assert ens.n_paths == 50 == summary["n_paths"]
    assert summary["exited_fraction"] == pytest.approx(ens.exited.mean())


def test_solve_outputs_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, 'entry = "manufactured-sine"\n[mesh]\nlo = [0.0]\nhi = [1.0]\n'
                         'points = [5]\n[solve]\nbsde_paths = 100\n')
    args = ["solve", "--config", cfg, "--paths", "200", "--dt", "1e-3", "--tol", "1e-3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("solve_report.json", "solution.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a" / "solve_report.json").read_text())
    assert rep["converged"] and rep["iterations"] <= 50


def test_solve_from_envelope_start(tmp_path):
    cfg = _cfg(tmp_path, 'entry = "manufactured-sine"\n[mesh]\nlo = [0.0]\nhi = [1.0]\n'
                         'points = [5]\n[solve]\ninitial = "envelope"\nbsde_paths = 100\n')
    assert main(["solve", "--config", cfg, "--paths", "200", "--dt", "1e-3", "--tol", "1e-3",
                 "--out", str(tmp_path / "e")]) == EXIT_OK


def test_exit_codes(tmp_path, capsys):
    assert main(["solve", "--config", _cfg(tmp_path, "[mc]\nn_path = 3\n")]) == EXIT_CONFIG
    assert "n_path" in capsys.readouterr().err
    assert main(["solve", "--config", _cfg(tmp_path, "x = = 1\n", "p.toml")]) == EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "none.toml")]) == EXIT_CONFIG
    assert main(["solve"]) == EXIT_CONFIG
    zero_iter = _cfg(tmp_path, 'entry = "manufactured-sine"\n[solve]\nmax_iters = 0\n', "z.toml")
    assert main(["solve", "--config", zero_iter, "--out", str(tmp_path / "z")]) == EXIT_NUMERIC
    assert "no iterations" in capsys.readouterr().err
    assert main(["solve", "--entry", "manufactured-sine", "--paths", "0"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--seed", "-4"])
    assert exc.value.code == 2


def test_non_converged_solve_exits_one(tmp_path):
    cfg = _cfg(tmp_path, 'entry = "manufactured-sine"\n[mesh]\nlo = [0.0]\nhi = [1.0]\n'
                         'points = [5]\n[solve]\nmax_iters = 1\nrevalidate = false\n')
    assert main(["solve", "--config", cfg, "--paths", "100", "--dt", "1e-3",
                 "--out", str(tmp_path / "n")]) == EXIT_FAIL
    rep = json.loads((tmp_path / "n" / "solve_report.json").read_text())
    assert rep["converged"] is False


def test_diagnose_writes_reports(tmp_path):
    cfg = _cfg(tmp_path, INTERVAL + "[diagnose]\nK = 4\neps = [0.05, 0.1]\nt_grid = [0.1, 0.01]\n")
    out = tmp_path / "d"
    assert main(["diagnose", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "compactness.json").read_text())
    assert rep["members"] == 4 and len(rep["covering_numbers"]) == 2
    m1 = json.loads((out / "m1.json").read_text())
    assert m1["times"] == [0.1, 0.01]
    for name in ("compactness_input_distances.csv", "compactness_image_distances.csv",
                 "compactness_covering.csv", "m1.csv"):
        assert (out / name).exists()


def test_verify_cheap_entry_and_failure_exit(tmp_path, capsys):
    out = tmp_path / "v"
    code = main(["verify", "--entry", "ou-2d", "--paths", "20000", "--out", str(out)])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and lines[0].startswith("PASS ou-2d/covariance")
    assert json.loads((out / "verify.json").read_text())[0]["passed"]
    # 30 paths cannot meet the 0.02 sup-error threshold
    assert main(["verify", "--entry", "poisson-interval", "--paths", "30", "--dt", "1e-2",
                 "--out", str(tmp_path / "w"), "--config",
                 _cfg(tmp_path, '[verify]\nchecks = ["oracle"]\n', "v.toml")]) == EXIT_FAIL
    assert "FAIL poisson-interval/oracle" in capsys.readouterr().out


def test_console_script_installed(tmp_path):
    res = subprocess.run(["fkmc", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
