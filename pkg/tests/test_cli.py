import json
import subprocess
import sys

import numpy as np
import pytest

from regmdp.analysis import read_sweep_csv
from regmdp.cli import main, parse_lambdas
from regmdp.mdp import gridworld, load_mdp, random_mdp
from regmdp.solver import load_solution


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_parse_lambdas():
    grid = parse_lambdas("logspace(1e-3,1e3,61)")
    assert len(grid) == 61 and grid[0] == pytest.approx(1e-3) and grid[-1] == pytest.approx(1e3)
    assert grid[30] == pytest.approx(1.0)
    assert parse_lambdas("0.1, 1,10") == [0.1, 1.0, 10.0]
    assert parse_lambdas("logspace(2,5,1)") == [2.0]


def test_gen_mdp_deterministic(in_tmp, capsys):
    args = ["gen-mdp", "--kind", "random", "--states", "50", "--actions", "10", "--gamma", "0.99",
            "--clip", "0.95", "--seed", "7"]
    assert main(args + ["--out", "a.json"]) == 0
    assert main(args + ["--out", "b.json"]) == 0
    assert (in_tmp / "a.json").read_bytes() == (in_tmp / "b.json").read_bytes()
    assert load_mdp("a.json") == random_mdp(50, 10, 0.99, 0.95, 7)
    assert "sha256" in capsys.readouterr().out


def test_gen_gridworld(in_tmp):
    assert main(["gen-mdp", "--kind", "gridworld", "--n", "5", "--gamma", "0.99", "--out", "grid.json"]) == 0
    mdp = load_mdp("grid.json")
    assert mdp.n_states == 81 and mdp == gridworld(5, 0.99)


def test_solve_vi_rpi_and_baseline(in_tmp, capsys):
    main(["gen-mdp", "--states", "20", "--actions", "5", "--out", "mdp.json"])
    base = ["solve", "--mdp", "mdp.json", "--reg", "tsallis:k=0.5,q=2", "--lambda", "0.1"]
    assert main(base + ["--method", "vi", "--out", "vi.json"]) == 0
    assert "delta=" in capsys.readouterr().out
    assert main(base + ["--method", "rpi", "--out", "rpi.json"]) == 0
    vi, rp = load_solution("vi.json"), load_solution("rpi.json")
    assert np.max(np.abs(vi.v_star - rp.v_star)) < 1e-6
    doc = json.loads((in_tmp / "vi.json").read_text())
    assert doc["regularizer"] == "tsallis:k=0.5,q=2.0" and len(doc["mdp_sha256"]) == 64
    assert doc["provenance"]["flags"]["method"] == "vi"
    assert main(["solve", "--mdp", "mdp.json", "--lambda", "0", "--out", "b.json"]) == 0
    sol = load_solution("b.json")
    assert np.all(np.sort(sol.policy, axis=1)[:, :-1] == 0)


def test_solve_nonconvergence_exit(in_tmp, capsys):
    code = main(["solve", "--env", "random", "--states", "10", "--actions", "3", "--reg", "shannon",
                 "--lambda", "1", "--max-iter", "3", "--out", "x.json"])
    assert code == 1
    assert "did not converge" in capsys.readouterr().err


def test_sweep(in_tmp):
    code = main(["sweep", "--env", "random", "--states", "15", "--actions", "4", "--reg", "tsallis",
                 "--reg", "shannon", "--lambdas", "logspace(0.01,10,4)", "--threads", "1"])
    assert code == 0
    rows = read_sweep_csv("sweep_tsallis.csv")
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    assert [r["lambda"] for r in rows] == pytest.approx([0.01, 0.1, 1.0, 10.0])
    meta = json.loads((in_tmp / "sweep_shannon.csv.meta.json").read_text())
    assert meta["regularizer"] == "shannon" and len(meta["points"]) == 4


def test_sweep_single_point(in_tmp):
    assert main(["sweep", "--env", "gridworld", "--n", "3", "--reg", "cos", "--lambdas", "0.5",
                 "--out", "one.csv"]) == 0
    text = (in_tmp / "one.csv").read_text().splitlines()
    assert len(text) == 2
    assert text[0].startswith("lambda,delta,uniformity_gap,err_thm5,bound_thm5,policy_subopt,iterations,p0")


def test_audit_pass_and_fault(in_tmp, capsys):
    base = ["audit", "--env", "random", "--states", "10", "--actions", "3", "--gamma", "0.9",
            "--reg", "tsallis", "--trials", "10"]
    assert main(base + ["--out", "audit.json"]) == 0
    report = json.loads((in_tmp / "audit.json").read_text())
    assert report["passed"] and len(report["checks"]) == 2 * 5
    assert main(base + ["--perturb-gamma", "1.01", "--skip-performance"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_audit_lambda_zero_tight(in_tmp):
    assert main(["audit", "--env", "random", "--states", "10", "--actions", "3", "--reg", "shannon",
                 "--lambdas", "0", "--trials", "10", "--out", "a.json"]) == 0
    checks = json.loads((in_tmp / "a.json").read_text())["checks"]
    sandwich = [c for c in checks if c["property"] == "sandwich"]
    assert sandwich[0]["worst_slack"] == 0.0


@pytest.mark.parametrize("argv", [
    ["solve", "--env", "random", "--reg", "gini", "--lambda", "1", "--out", "x.json"],
    ["solve", "--env", "random", "--lambda", "1", "--out", "x.json"],
    ["sweep", "--env", "random", "--lambdas", "1,0.5"],
    ["sweep", "--env", "random", "--lambdas", "logspace(a,b,c)"],
    ["sweep", "--env", "random", "--reg", "tsallis", "--reg", "cos", "--out", "fixed.csv"],
    ["solve", "--mdp", "missing.json", "--reg", "shannon", "--lambda", "1", "--out", "x.json"],
])
def test_usage_errors(in_tmp, argv):
    assert main(argv) == 2


def test_argparse_errors(in_tmp):
    with pytest.raises(SystemExit) as info:
        main(["solve", "--mdp", "a.json", "--env", "random", "--lambda", "1", "--out", "x"])
    assert info.value.code == 2


def test_module_entry_point(in_tmp):
    out = subprocess.run([sys.executable, "-m", "regmdp.cli", "gen-mdp", "--kind", "gridworld", "--n", "2",
                          "--out", "g.json"], capture_output=True, text=True)
    assert out.returncode == 0 and "sha256" in out.stdout
