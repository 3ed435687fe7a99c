import io
import json
import math
import subprocess
import sys

import pytest

from specshare.cli import main

SMALL = ["--n", "2000", "--seed", "5"]


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_sample(tmp_path):
    path = tmp_path / "ens.txt"
    code, text = run("sample", *SMALL, "--out", str(path))
    assert code == 0
    summary = json.loads(text)
    assert summary["n"] == 2000 and abs(summary["mean_f"] - 1.0) < 5 * summary["stderr_f"]
    assert path.exists()
    code, text = run("solve-aipc", *SMALL, "--ensemble", str(path), "--gamma", "1")
    code2, text2 = run("solve-aipc", *SMALL, "--gamma", "1")
    assert json.loads(text)["c_s"] == json.loads(text2)["c_s"]


def test_solve_aipc_infinite_gamma(tmp_path):
    dump = tmp_path / "p.csv"
    code, text = run("solve-aipc", *SMALL, "--gamma", "inf", "--dump", str(dump))
    assert code == 0
    summary = json.loads(text)
    assert summary["nu"] == 0
    assert summary["achieved_power"] == pytest.approx(10.0)
    lines = dump.read_text().splitlines()
    assert lines[0] == "index,p,g_p" and len(lines) == 2001


def test_solve_pclc():
    code, text = run("solve-pclc", *SMALL, "--loss-fraction", "0.05", "--pu", "wf")
    summary = json.loads(text)
    assert code == 0 and summary["converged"]
    assert summary["c_p"] >= 0.95 * summary["c_p_max"] - 1e-9
    code, text = run("solve-pclc", *SMALL, "--c-delta", "0")
    assert json.loads(text)["c_s"] == 0


def test_frontier_row_count(tmp_path):
    out = tmp_path / "f.csv"
    code, _ = run("frontier", *SMALL, "--kind", "pclc", "--levels", "0:0.1:1.0", "--out", str(out))
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "kind,level,c_p,c_s,converged,residuals"
    assert len(rows) == 12
    meta = json.loads((tmp_path / "f.csv.meta.json").read_text())
    assert meta["seed"] == 5 and meta["n"] == 2000 and meta["config_hash"] and meta["version"]


def test_frontier_to_stdout_absolute_levels():
    code, text = run("frontier", *SMALL, "--kind", "aipc", "--levels", "0,1,inf")
    rows = text.splitlines()
    assert code == 0 and len(rows) == 4 and rows[3].startswith("aipc,inf,")


def test_mac_bound():
    code, text = run("mac-bound", *SMALL, "--policy", "aipc", "--gamma", "0.5")
    report = json.loads(text)
    assert code == 0
    assert report["inside"] and report["sum_bound_dominates_single_user"]


def test_oracle_subcommand():
    code, text = run("oracle", "--seed", "3", "--problem", "aipc", "--states", "3", "--gamma", "0.7")
    report = json.loads(text)
    assert code == 0 and abs(report["relative_difference"]) < 1e-3


def test_config_file_and_set(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mc.n = 1000\nmc.seed = 2\naipc.gamma = inf\n")
    code, text = run("solve-aipc", "--config", str(cfg), "--set", "su.budget=3")
    summary = json.loads(text)
    assert summary["achieved_power"] == pytest.approx(3.0)


@pytest.mark.parametrize("argv", [
    ["solve-aipc", "--set", "mc.bogus=1"],
    ["solve-aipc", "--set", "novalue"],
    ["solve-aipc", "--config", "/nonexistent/run.cfg"],
    ["frontier", "--levels", "1:0:2"],
    ["solve-pclc", "--n", "0"],
])
def test_errors_exit_nonzero(argv, capsys):
    code, _ = run(*argv)
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "specshare", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("specshare ")
