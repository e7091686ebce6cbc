import json

import pytest
from click.testing import CliRunner

from kakutani.cli import ExperimentConfig, main
from kakutani.errors import ConfigInvalid


@pytest.fixture
def runner():
    return CliRunner()


def lines(output):
    return [json.loads(x) for x in output.strip().splitlines()]


def test_fbar_identical(runner):
    res = runner.invoke(main, ["--jobs", "1", "fbar", "1 2 3", "1 2 3"])
    assert res.exit_code == 0
    report, summary = lines(res.output)
    assert report["lhs"] == "0/1" and report["status"] == "pass"
    assert summary["counts"]["fail"] == 0 and summary["seed"] == 0


def test_fbar_value(runner):
    res = runner.invoke(main, ["fbar", "--backend", "dp", "1 2", "2 1"])
    assert lines(res.output)[0]["lhs"] == "1/2"


def test_malformed_tree_exits_2(runner):
    res = runner.invoke(main, ["build", "(("])
    assert res.exit_code == 2
    assert "ConfigInvalid" in res.output


def test_unknown_config_exits_2(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "nope"}))
    assert runner.invoke(main, ["run", str(cfg)]).exit_code == 2
    with pytest.raises(ConfigInvalid):
        ExperimentConfig.from_json({"kind": "fbar", "params": {"a": "1"}})


def test_run_config_matches_subcommand(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "fbar", "params": {"a": "1 2", "b": "2 1"}, "seed": 3}))
    res = runner.invoke(main, ["run", str(cfg)])
    assert res.exit_code == 0 and lines(res.output)[-1]["seed"] == 3


def test_verify_subset_and_byte_identical_reruns(runner, tmp_path):
    outs = []
    for name in ("a.jsonl", "b.jsonl"):
        path = tmp_path / name
        res = runner.invoke(main, ["--jobs", "1", "--seed", "7", "--output", str(path), "verify", "--suite", "odometer",
                                   "--suite", "faithful"])
        assert res.exit_code == 0, res.output
        outs.append(path.read_bytes())
        assert (tmp_path / (name + ".summary.json")).exists()
    assert outs[0] == outs[1]


def test_baseline_check_perturbed_spec_exits_1(runner):
    res = runner.invoke(main, ["baseline", "check", "feldman", "--feldman-spec", "1,7,2"])
    assert res.exit_code == 1
    err = json.loads(res.output.strip().splitlines()[-1])
    assert err["error"] == "BaselineMismatch" and err["diff"]["fingerprint"]["spec"]["given"]["N"] == 7


def test_baseline_check_bundled_passes(runner):
    res = runner.invoke(main, ["baseline", "check", "feldman", "--feldman-spec", "1,3,2"])
    assert res.exit_code == 0, res.output


def test_missing_baseline_exits_2(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("KF_BASELINE_DIR", str(tmp_path))
    assert runner.invoke(main, ["baseline", "check", "coding"]).exit_code == 2


def test_csv_format(runner):
    res = runner.invoke(main, ["--format", "csv", "fbar", "1 2", "1 2"])
    head, row = res.output.splitlines()[:2]
    assert head.startswith("check_id,status") and row.startswith("fbar,pass")


def test_feldman_and_circular_commands(runner):
    res = runner.invoke(main, ["feldman", "-T", "1", "-N", "3", "-M", "2"])
    assert res.exit_code == 0, res.output
    assert any(r.get("check_id", "").startswith("Lemma") or "feldman" in r.get("check_id", "") for r in lines(res.output)[:-1])
    res = runner.invoke(main, ["circular", "2,3", "3,2"])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["circular", "--wrap", "mod", "2,3"])
    assert res.exit_code == 1


def test_build_writes_words(runner, tmp_path):
    res = runner.invoke(main, ["build", "chain1", "--stages", "1", "--out-dir", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "ledger.json").exists() and list(tmp_path.glob("W*.json"))


def test_faithful_build_refuses(runner):
    res = runner.invoke(main, ["build", "chain1", "--stages", "1", "--mode", "faithful"])
    assert res.exit_code == 1
    assert "faithful-feasibility" in res.output


def test_build_two_stages_within_cap(runner):
    # stored words are index strings, so the cap applies to count * k, not to the expanded length
    res = runner.invoke(main, ["build", "fork", "--stages", "2"])
    assert res.exit_code == 0, res.output
    assert lines(res.output)[-1]["counts"]["fail"] == 0
