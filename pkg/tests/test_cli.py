from __future__ import annotations

import json

import pytest

from assortgen.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main


def test_generate_roundtrip(tmp_path, capsys):
    out = tmp_path / "g"
    code = main([
        "generate", "--seed", "3", "--out", str(out),
        "--param", 'model={"family":"ws","n":40,"params":{"ring_k":4,"rewire_p":0.1}}',
    ])
    assert code == EXIT_OK
    assert (out / "graph.txt").exists()
    assert (out / "manifest.json").exists()
    summary = json.loads(capsys.readouterr().out)
    assert summary["graph"]["n"] == 40


def test_config_file_drives_run(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "metrics",
        "seed": 5,
        "out": str(tmp_path / "m"),
        "params": {"model": {"family": "er", "n": 30, "params": {"p": 0.2}}},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["metrics", "--config", str(path)]) == EXIT_OK
    assert (tmp_path / "m" / "metrics.json").exists()


def test_config_unknown_key_rejected(tmp_path, capsys):
    cfg = {"schema_version": 1, "kind": "metrics", "oops": 1}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["metrics", "--config", str(path)]) == EXIT_CONFIG
    assert "unknown config key" in capsys.readouterr().err


def test_config_schema_version_required(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"kind": "metrics"}))
    assert main(["metrics", "--config", str(path)]) == EXIT_CONFIG


def test_unknown_param_is_config_error(tmp_path):
    code = main([
        "generate", "--out", str(tmp_path / "x"),
        "--param", 'model={"family":"er","n":30,"params":{"p":0.1}}',
        "--param", "bogus=1",
    ])
    assert code == EXIT_CONFIG


def test_infeasible_target_exit_code(tmp_path):
    code = main([
        "dmgg", "run", "--out", str(tmp_path / "x"),
        "--param", 'model={"family":"er","n":60,"params":{"p":0.1}}',
        "--param", "targets=[0.999]",
        "--param", "num_samples=2",
    ])
    assert code == EXIT_INFEASIBLE


def test_dmgg_greedy_flag(tmp_path, capsys):
    code = main([
        "dmgg", "run", "--actor", "greedy", "--seed", "2", "--out", str(tmp_path / "d"),
        "--param", 'model={"family":"er","n":80,"params":{"p":0.1}}',
        "--param", "targets=[0.2]",
        "--param", "epsilon=0.02",
        "--param", "num_samples=3",
    ])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["ensembles"][0]["num_samples"] == 3


def test_policy_actor_requires_checkpoint(tmp_path):
    code = main([
        "dmgg", "run", "--actor", "policy", "--out", str(tmp_path / "x"),
        "--param", 'model={"family":"er","n":60,"params":{"p":0.1}}',
        "--param", "targets=[0.1]",
    ])
    assert code == EXIT_CONFIG
