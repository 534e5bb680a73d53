import json

import pytest

from smctune.cli import main


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_truths_gaussian(capsys):
    assert main(["truths", "gaussian", "10"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["log_z"] == 0.0 and out["mean"] == [2.0] * 10


def test_truths_without_closed_form(capsys):
    assert main(["truths", "lgcp", "10"]) == 1


def test_unknown_subcommand_prints_usage(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1


def test_validate(tmp_path, capsys):
    good = _write(tmp_path, {"model": {"name": "gaussian", "dim": 3}, "N": 64})
    assert main(["validate", good]) == 0
    bad = _write(tmp_path, {"model": {"name": "gaussian", "dim": 3}, "repetitions": 0}, "bad.json")
    assert main(["validate", bad]) == 1
    assert "repetitions" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["validate", str(broken)]) == 1
    assert main(["validate", str(tmp_path / "absent.json")]) == 1


def test_run_report_verify(tmp_path, monkeypatch):
    cfg = _write(tmp_path, {"model": {"name": "gaussian", "dim": 2}, "N": 64, "repetitions": 2,
                            "samplers": ["mala"], "tuners": ["ft"], "seed": 3})
    out = tmp_path / "out"
    assert main(["run", cfg, "--out", str(out)]) == 0
    first = (out / "summary.csv").read_bytes()
    assert main(["report", str(out)]) == 0
    assert (out / "summary.csv").read_bytes() == first
    assert main(["verify", str(out)]) == 0
    # environment override of the output directory
    env_out = tmp_path / "env"
    monkeypatch.setenv("SMCTUNE_OUT", str(env_out))
    assert main(["run", cfg]) == 0
    assert (env_out / "runs.csv").read_bytes() == (out / "runs.csv").read_bytes()


def test_run_runtime_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, {"model": {"name": "logit", "data": str(tmp_path / "none.csv"),
                                      "label": "y"}, "N": 16})
    assert main(["run", cfg, "--out", str(tmp_path / "o")]) == 2


def test_report_missing_dir(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == 2
