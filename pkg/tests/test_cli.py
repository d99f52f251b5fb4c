import json
from pathlib import Path

import pytest

from ladderlab.cli import load_schema, run, validate_config


def read_json(path):
    return json.loads(Path(path).read_text())


def test_schema_loads_and_validates():
    schema = load_schema()
    assert "subcommand" in schema["properties"]
    good = {"subcommand": "verify", "seed": 1, "params": {"suite": "minorant"}}
    assert validate_config(good) == []
    assert validate_config({"seed": 1}) != []  # missing subcommand
    assert validate_config({"subcommand": "nope"}) != []
    assert validate_config({"subcommand": "verify", "params": {"a": -1.0}}) != []


def test_unknown_flag_is_config_error(capsys):
    assert run(["verify", "--does-not-exist", "1"]) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    assert run(["verify", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"subcommand": "verify", "params": {"suite": "bogus"}}))
    assert run(["verify", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"subcommand": "profile"}))
    assert run(["verify", "--config", str(bad)]) == 2  # config for a different subcommand


def test_verify_linear_minorant(tmp_path):
    out = tmp_path / "report.json"
    code = run(["verify", "--suite", "minorant", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["status"] == "ok"
    checks = doc["summary"]["checks"]
    assert checks[0]["name"] == "minorant"
    assert checks[0]["passed"]
    assert len(checks[0]["details"]["residuals"]) == 15


def test_verify_scaling_suite(tmp_path):
    out = tmp_path / "scaling.json"
    assert run(["verify", "--suite", "scaling", "--samples", "300",
                "--seed", "5", "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["summary"]["checks"][0]["details"]["max_relative_residual"] < 1e-12


def test_simulate_csv_deterministic(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["simulate", "--n", "3", "--steps", "2000", "--replicas", "2",
            "--seed", "9", "--format", "csv"]
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0].startswith("# ladderlab csv schema v")
    assert lines[1].startswith("# config:")
    assert lines[2].split(",")[:3] == ["replica", "last_vertex", "returns"]
    assert len(lines) == 5


def test_simulate_seed_changes_output(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    base = ["simulate", "--n", "3", "--steps", "2000", "--replicas", "1", "--format", "csv"]
    run(base + ["--seed", "1", "--out", str(out1)])
    run(base + ["--seed", "2", "--out", str(out2)])
    assert out1.read_bytes() != out2.read_bytes()


def test_profile_small(tmp_path):
    out = tmp_path / "prof.csv"
    code = run(["profile", "--n", "5", "--steps", "20000", "--replicas", "12",
                "--seed", "3", "--fit-lo", "1", "--fit-hi", "4",
                "--format", "csv", "--out", str(out)])
    assert code == 0
    summary = read_json(out.with_suffix(".csv.summary.json"))
    assert summary["summary"]["slope"] < 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")][1:]
    assert len(rows) == 12 * 5


def test_sample_env(tmp_path):
    out = tmp_path / "env.csv"
    code = run(["sample-env", "--n", "3", "--samples", "300", "--burn-in", "300",
                "--seed", "11", "--format", "csv", "--out", str(out)])
    assert code == 0  # sampler diagnostics are reported, not failed
    lines = out.read_text().splitlines()
    header = lines[2].split(",")
    assert header[1] == "Z0" and header[-1] == "Zn"
    assert "T_2" in header
    assert len(lines) == 3 + 300


def test_simulate_rwre_mode(tmp_path):
    weights = tmp_path / "weights.json"
    weights.write_text(json.dumps({"x": [1.0, 0.5, 2.0, 1.0, 0.5, 2.0, 1.0]}))
    out = tmp_path / "rwre.csv"
    code = run(["simulate", "--n", "2", "--mode", "rwre", "--weights", str(weights),
                "--steps", "5000", "--replicas", "1", "--seed", "4",
                "--format", "csv", "--out", str(out)])
    assert code == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")][1:]
    assert len(rows) == 1
    counts = [int(v) for v in rows[0].split(",")[3:]]
    assert sum(counts) == 5000


def test_resistance_unit(tmp_path):
    out = tmp_path / "res.json"
    code = run(["resistance", "--n", "2", "--format", "json", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    row = doc["rows"][0]
    assert row[1] == pytest.approx(13 / 11)
    assert row[4] == pytest.approx(11 / 26)


def test_resistance_random(tmp_path):
    out = tmp_path / "res.csv"
    code = run(["resistance", "--n", "4", "--random-weights", "50",
                "--seed", "2", "--format", "csv", "--out", str(out)])
    assert code == 0


def test_returns_trend(tmp_path):
    out = tmp_path / "ret.json"
    code = run(["returns", "--n-list", "2,4", "--k-list", "1,2", "--replicas", "400",
                "--seed", "7", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert doc["summary"]["nondecreasing_in_n"]


def test_spectrum_small_grid(tmp_path):
    out = tmp_path / "spec.json"
    code = run(["spectrum", "--grid", "small", "--a", "1.0", "--eta", "0.0",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    s = doc["summary"]
    assert s["lambda"] > 0
    assert s["gap"] < 1
    assert s["symmetry_defect"] < 1e-8
    assert s["symmetry_control_quarter"] > 1e-3


def test_chain_stats_operator_only(tmp_path):
    out = tmp_path / "chain.json"
    code = run(["chain-stats", "--n", "6", "--j", "4", "--i", "2", "--grid", "small",
                "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert "operator_value" in doc["summary"]
