import json

import pytest
from typer.testing import CliRunner

from mcgsim import VERSION
from mcgsim.cli import app

runner = CliRunner()


def parse_result(output: str) -> dict:
    """The JSON envelope printed on stdout; progress lines around it are ignored."""
    return json.loads(output[output.index("{"):output.rindex("}") + 1])


@pytest.fixture
def scenario(tiny_config, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "tiny.env"
    path.write_text(tiny_config.to_text())
    return path


def invoke(*args):
    return runner.invoke(app, [*args, "--quiet"])


def test_simulate_baseline(scenario, tmp_path):
    result = invoke("simulate", "--config", str(scenario), "--out", str(tmp_path / "run"))
    assert result.exit_code == 0, result.output
    payload = parse_result(result.output)
    assert payload["ok"] is True
    assert payload["version"] == VERSION
    assert payload["error"] is None
    assert "elapsed_ms" in payload["metrics"]
    assert payload["data"]["summary"]["policy"] == "scg-baseline"
    assert (tmp_path / "run" / "metrics.csv").is_file()


def test_simulate_refuses_learned_policy(scenario, tmp_path):
    result = invoke("simulate", "--config", str(scenario), "--policy", "learned",
                    "--out", str(tmp_path / "run"))
    assert result.exit_code == 1
    payload = parse_result(result.output)
    assert payload["ok"] is False
    assert payload["error"]["type"] == "ConfigError"


def test_missing_config_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    result = invoke("simulate", "--config", str(tmp_path / "absent.env"))
    assert result.exit_code == 1
    assert parse_result(result.output)["error"]["type"] == "ConfigError"


def test_train_then_evaluate(scenario, tmp_path):
    out = tmp_path / "learned"
    trained = invoke("train", "--config", str(scenario), "--out", str(out), "--episodes", "1")
    assert trained.exit_code == 0, trained.output
    data = parse_result(trained.output)["data"]
    assert data["checkpoint"] == str(out / "checkpoint")

    evaluated = invoke("evaluate", "--config", str(scenario), "--out", str(out), "--episodes", "1")
    assert evaluated.exit_code == 0, evaluated.output
    assert parse_result(evaluated.output)["data"]["summary"]["episodes"] == 1


def test_evaluate_without_checkpoint(scenario, tmp_path):
    result = invoke("evaluate", "--config", str(scenario), "--out", str(tmp_path / "empty"))
    assert result.exit_code == 2
    assert parse_result(result.output)["error"]["type"] == "FileNotFoundError"


def test_enumerate_actions(scenario):
    result = invoke("enumerate-actions", "--config", str(scenario))
    assert result.exit_code == 0, result.output
    records = [json.loads(line) for line in result.output.splitlines() if line.startswith("{")]
    assert len(records) == 17
    assert sum(r["agent"] == "ctu" for r in records) == 7
    assert records[-1] == {"agent": "start", "index": 9, "action": [3, 4]}


def test_compare(scenario, tmp_path):
    result = invoke("compare", "--config", str(scenario), "--out", str(tmp_path / "cmp"),
                    "--policies", "random-mcg,scg-baseline")
    assert result.exit_code == 0, result.output
    assert parse_result(result.output)["data"]["reference"] == "scg-baseline"


def test_sweep_rejects_bad_grant_list(scenario, tmp_path):
    result = invoke("sweep-ncg", "--config", str(scenario), "--n-cg", "1,x", "--out", str(tmp_path))
    assert result.exit_code == 1
    assert parse_result(result.output)["error"]["type"] == "ConfigError"


def test_traffic_profile(scenario, tmp_path):
    result = invoke("traffic-profile", "--config", str(scenario), "--out", str(tmp_path / "traffic"),
                    "--seed", "3")
    assert result.exit_code == 0, result.output
    data = parse_result(result.output)["data"]
    assert data["n_ue"] == 300
    assert (tmp_path / "traffic" / "traffic.csv").is_file()


def test_environment_overrides_reach_commands(scenario, tmp_path, monkeypatch):
    monkeypatch.setenv("MCG_N_CG", "9")
    result = invoke("enumerate-actions", "--config", str(scenario))
    assert result.exit_code == 1


@pytest.mark.parametrize("flag,value", [("--seed", "abc"), ("--episodes", "two"), ("--workers", "1.5")])
def test_unparsable_integer_flag_is_a_config_error(scenario, tmp_path, flag, value):
    result = invoke("simulate", "--config", str(scenario), "--out", str(tmp_path / "run"), flag, value)
    assert result.exit_code == 1
    payload = parse_result(result.output)
    assert payload["error"]["type"] == "ConfigError"
    assert flag in payload["error"]["message"]
