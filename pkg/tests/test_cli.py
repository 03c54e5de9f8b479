import csv
import json

import pytest

from trustplan.cli import RESULT_COLUMNS, ResultsWriter, main, read_results

FAST = ["--set", "duration=1.0", "--set", "planner.rollouts=32"]


def test_run_writes_trace_and_record(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--seed", "3", *FAST]) == 0
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "# schema_version: 1"
    assert lines[1].startswith("sim_time_s,omega,weighted_ade_m")
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["seed"] == 3 and rec["aborted"] is False
    assert "crashes=" in capsys.readouterr().out
    assert "schema_version: 1" in (tmp_path / "config.yaml").read_text()


def test_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--out", str(tmp_path / d), "--seed", "7", *FAST]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_run_reads_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("schema_version: 1\nscenario: empty\nduration: 1.0\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "scenario: empty" in (tmp_path / "o" / "config.yaml").read_text()


def test_invalid_config_names_field(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--set", "t_est=0"]) == 2
    assert "t_est" in capsys.readouterr().err
    assert main(["run", "--out", str(tmp_path), "--set", "planner.bogus=1"]) == 2
    assert "planner.bogus" in capsys.readouterr().err


def test_env_sets_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv("TRUSTPLAN_OUT", str(tmp_path / "env"))
    assert main(["run", *FAST]) == 0
    assert (tmp_path / "env" / "trace.csv").exists()


def sweep(out, *extra):
    return main(["sweep", "--out", str(out), "--scenarios", "junction,empty", "--modes", "balanced",
                 "--noises", "0.1", "--t-est", "off,5", "--seeds", "0-2", *FAST, *extra])


def test_sweep_counts_and_resumes(tmp_path, capsys):
    assert sweep(tmp_path) == 0
    rows = read_results(tmp_path / "results.csv")
    assert len(rows) == 12
    assert list(rows[0]) == list(RESULT_COLUMNS)
    assert len({r["config_hash"] for r in rows}) == 12
    assert "executed=12" in capsys.readouterr().out
    assert sweep(tmp_path) == 0
    assert "executed=0" in capsys.readouterr().out
    assert len(read_results(tmp_path / "results.csv")) == 12
    # every row can be rebuilt from its config echo
    assert all(json.loads(r["config"])["seed"] == int(r["seed"]) for r in rows)


def test_poisoned_config_is_isolated(tmp_path):
    assert main(["sweep", "--out", str(tmp_path), "--scenarios", "empty", "--modes", "balanced",
                 "--noises", "0.1", "--t-est", "off,0", "--seeds", "0", *FAST]) == 0
    rows = read_results(tmp_path / "results.csv")
    assert len(rows) == 2
    bad = [r for r in rows if r["aborted"] == "true"]
    assert len(bad) == 1 and "t_est" in bad[0]["error"]


def test_sweep_traces_independent_of_jobs(tmp_path):
    args = ["--scenarios", "junction", "--modes", "balanced", "--noises", "0.1",
            "--t-est", "off,5", "--seeds", "0", *FAST]
    assert main(["sweep", "--out", str(tmp_path / "j1"), "--jobs", "1", *args]) == 0
    assert main(["sweep", "--out", str(tmp_path / "j2"), "--jobs", "2", *args]) == 0
    t1 = sorted((tmp_path / "j1" / "traces").iterdir())
    t2 = sorted((tmp_path / "j2" / "traces").iterdir())
    assert [p.name for p in t1] == [p.name for p in t2] and len(t1) == 2
    assert all(a.read_bytes() == b.read_bytes() for a, b in zip(t1, t2))


def synthetic_table(path, arms):
    writer = ResultsWriter(path)
    i = 0
    for trustmhe, succ, n in arms:
        for k in range(n):
            crashes = 0 if k < succ else 1
            writer.write({"scenario": "junction", "mode": "balanced", "noise": 0.1, "trustmhe": trustmhe,
                          "t_est": 5, "seed": i, "config_hash": f"{i:016x}", "crashes": crashes,
                          "progress": 100.0, "success": crashes == 0,
                          "min_dist": 0.0 if crashes else 1.0 + (k % 7) / 10,
                          "sim_time": 20.0, "wall_time": 1.0, "aborted": False, "error": "",
                          "config": "{}"})
            i += 1
    writer.close()


def test_stats_reproduces_table_chi2(tmp_path, capsys):
    results = tmp_path / "results.csv"
    synthetic_table(results, [(True, 52, 144), (False, 364, 720)])
    assert main(["stats", str(results), "--group-by", "t_est"]) == 0
    out = capsys.readouterr().out
    assert "chi2_yates" in out and "9.458" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    chi = next(t for t in doc["tests"] if t["test"] == "chi2_yates" and t["group"] == "all")
    assert chi["statistic"] == pytest.approx(9.45, abs=0.01)
    assert chi["p"] == pytest.approx(0.0021, abs=0.0002)
    with (tmp_path / "plotdata_crashes.csv").open() as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    assert rows[0] == ["group", "arm", "n", "min", "q1", "median", "q3", "max"]
    assert {r[0] for r in rows[1:]} == {"all", "t_est=5"}


def test_stats_single_arm_and_empty(tmp_path, capsys):
    results = tmp_path / "results.csv"
    synthetic_table(results, [(True, 3, 5)])
    assert main(["stats", str(results)]) == 0
    assert "skipped" in capsys.readouterr().out
    assert main(["stats", str(tmp_path / "missing.csv")]) == 2
