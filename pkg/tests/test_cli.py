from __future__ import annotations

import json
import subprocess
import sys

import pytest

from wsac.cli import main


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({
        "generator": {"n_states": 4, "n_actions": 2, "seed": 2},
        "data": {"n_samples": [150], "seeds": [0]},
        "wsac": {"k": 5},
    }))
    return path


def test_pipeline(tmp_path, spec_file, capsys):
    out = tmp_path / "run"
    base = ["--spec", str(spec_file), "--out", str(out)]
    assert main(["gen-cmdp", *base]) == 0
    assert (out / "cmdp_2.json").exists()
    assert main(["gen-data", *base, "--cmdp", str(out / "cmdp_2.json"), "--p", "0.5"]) == 0
    assert (out / "data_n150_s0.jsonl").exists()
    assert main(["train", *base, "--data", str(out / "data_n150_s0.jsonl")]) == 0
    assert (out / "trace.csv").read_text().splitlines()[0].startswith("k,crit_obj_r")
    assert main(["eval", *base, "--cmdp", str(out / "cmdp_2.json"), "--policy", str(out / "policy.json"),
                 "--behavior", str(out / "behavior.json")]) == 0
    doc = json.loads((out / "eval.json").read_text())
    assert {"j_r", "j_c", "reward_normalized", "cost_normalized", "safe", "cost_within_bound"} <= set(doc)
    assert "policy.json" in capsys.readouterr().out


def test_invariant_violations_exit_2(tmp_path, spec_file):
    assert main(["rate", "--spec", str(spec_file), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"generator": {"cost_threshold": -1}}))
    assert main(["gen-cmdp", "--spec", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["gen-cmdp", "--spec", str(spec_file), "--workers", "0", "--out", str(tmp_path)]) == 2


def test_missing_file_exits_1(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none.jsonl"), "--out", str(tmp_path)]) == 1


def test_bad_log_level(tmp_path, spec_file, monkeypatch):
    monkeypatch.setenv("WSAC_LOG", "loud")
    assert main(["gen-cmdp", "--spec", str(spec_file), "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path, spec_file):
    proc = subprocess.run([sys.executable, "-m", "wsac.cli", "gen-cmdp", "--spec", str(spec_file),
                           "--out", str(tmp_path), "--seed", "7"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cmdp_7.json").exists()


def test_shipped_specs_load():
    from pathlib import Path

    from wsac.experiments import ExperimentSpec

    specs = sorted((Path(__file__).parents[1] / "scripts" / "specs").glob("*.json"))
    assert [p.stem for p in specs] == ["ablation", "figure1", "rate", "sensitivity"]
    for p in specs:
        ExperimentSpec.load(p)
