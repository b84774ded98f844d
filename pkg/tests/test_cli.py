import csv
import json
import subprocess
import sys

import mpmath as mp
import pytest

from satbound.cli import ConfigError, RunConfig, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.mark.parametrize("argv", [
    ["bound", "--digits", "10"],
    ["bound", "--M", "0"],
    ["bound", "--gamma", "-1"],
    ["bound", "--gamma", "abc"],
    ["grid", "--grid", "1"],
    ["experiments"],
    ["experiments", "--suite", "nope"],
    ["experiments", "--experiment", "nope", "--seeds", "1"],
    ["sweep", "--lo", "4.5", "--hi", "4.6", "--digits", "30"],
])
def test_bad_configuration_exits_2(argv, capsys):
    assert main(argv) == 2


def test_config_file_and_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gamma": 4.4898, "digits": 30, "multistarts": 0}))
    code, rep = run(capsys, "bound", "--config", str(cfg))
    assert code == 0 and rep["config"]["gamma"] == "4.4898"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["bound", "--config", str(cfg)]) == 2
    assert main(["bound", "--config", str(tmp_path / "missing.json")]) == 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(digits=29).validate()
    assert RunConfig().validate().workers >= 1


def test_bound_report_is_reproducible(tmp_path, capsys):
    args = ["bound", "--digits", "30", "--multistarts", "2"]
    code, a = run(capsys, *args, "--out", str(tmp_path / "a.json"))
    _, b = run(capsys, *args)
    assert code == 0
    assert a["sha256"] == b["sha256"] and a["result"] == b["result"]
    assert json.loads((tmp_path / "a.json").read_text())["sha256"] == a["sha256"]
    assert a["result"]["rate_below_one"] and isinstance(a["result"]["rate"], str)


def test_bound_above_threshold_fails(capsys):
    code, rep = run(capsys, "bound", "--gamma", "4.45", "--digits", "30", "--multistarts", "0")
    assert code == 1 and not rep["passed"]


def test_sweep_writes_trace(tmp_path, capsys):
    trace = tmp_path / "sweep.csv"
    code, rep = run(capsys, "sweep", "--digits", "30", "--trace", str(trace))
    assert code == 0
    assert mp.mpf(rep["result"]["gamma_star"]) <= mp.mpf("4.4898")
    rows = list(csv.DictReader(trace.open()))
    widths = [mp.mpf(r["hi"]) - mp.mpf(r["lo"]) for r in rows]
    assert len(rows) == rep["result"]["steps"]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_peel_stats(tmp_path, capsys):
    dimacs, trace = tmp_path / "f.cnf", tmp_path / "t.csv"
    code, rep = run(capsys, "peel-stats", "--n", "2000", "--seeds", "2", "--dimacs", str(dimacs),
                    "--trace", str(trace), "--stride", "5")
    assert code == 0
    assert len(rep["result"]["runs"]) == 2
    assert dimacs.read_text().startswith("p cnf 2000 8979")
    assert trace.read_text().startswith("t/n,Y_0/n,L/n")


def test_experiments_tiny_exact(capsys):
    code, rep = run(capsys, "experiments", "--suite", "tiny-exact")
    assert code == 0
    assert rep["result"]["reports"][0]["aggregate"]["failures"] == 0


def test_experiments_jobs_do_not_change_the_hash(capsys):
    args = ["experiments", "--experiment", "degree-concentration", "--n", "3000", "--seeds", "2"]
    _, a = run(capsys, *args, "--jobs", "1")
    _, b = run(capsys, *args, "--jobs", "2")
    assert a["sha256"] == b["sha256"]


def test_lp_check_small_M_reports_failure(capsys):
    # with M=6 several ell minima are 0, so the boundary pattern does not hold
    code, rep = run(capsys, "lp-check", "--M", "6")
    assert code == 1
    assert rep["result"]["all_certified"] and rep["result"]["case3_null_space"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "satbound.cli", "bound", "--digits", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "digits" in proc.stderr
