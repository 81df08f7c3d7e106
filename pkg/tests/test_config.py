from pathlib import Path

import pytest

from mcgsim.config import ScenarioConfig
from mcgsim.errors import ConfigError


def test_defaults_are_consistent():
    cfg = ScenarioConfig()
    assert cfg.numerology().n_slot == 8
    assert cfg.n_subframes == 1000
    assert cfg.catalog().sizes == (35, 1)
    assert cfg.catalog(n_cg=2).sizes == (7, 10)
    hyper = cfg.hyperparams()
    assert (hyper.gamma, hyper.minibatch, hyper.target_sync) == (0.5, 32, 1000)
    assert hyper.hidden_layers == (128, 128)
    assert cfg.channel().sinr_threshold == pytest.approx(0.1)


def test_scg_catalog_is_one_full_grant():
    catalog = ScenarioConfig().scg_catalog()
    assert catalog.sizes == (1, 1)
    grant = catalog.schedule(0, 0, 1).grants[0]
    assert (grant.n_ctu, grant.n_start, grant.n_repe) == (64, 0, 5)


def test_epsilon_schedule_spans_training():
    schedule = ScenarioConfig(episodes=100).epsilon_schedule()
    assert schedule.total_episodes == 100
    assert schedule.value(40) == pytest.approx(0.1)


def test_parse_text():
    cfg = ScenarioConfig.from_text(
        "# desk run\n"
        "N_UE=500\n"
        "ctu_alphabet=[8, 56]\n"
        "start_alphabet=0,1,2\n"
        "use_warmup=no\n"
        "learning_rate=1e-3\n"
        "policy=random-mcg\n"
        "n_cg=2\n"
    )
    assert cfg.n_ue == 500
    assert cfg.ctu_alphabet == [8, 56]
    assert cfg.start_alphabet == [0, 1, 2]
    assert cfg.use_warmup is False
    assert cfg.learning_rate == pytest.approx(1e-3)
    assert cfg.policy == "random-mcg"
    assert cfg.catalog().sizes == (2, 3)


@pytest.mark.parametrize("text", [
    "colour=blue\n",
    "n_ue=many\n",
    "use_warmup=maybe\n",
    "n_cg=2.5\n",
    "ctu_alphabet=[8, x]\n",
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_text(text)


@pytest.mark.parametrize("overrides", [
    {"mu": 7},
    {"n_sym": 3},
    {"policy": "oracle"},
    {"traffic_preset": "beta-1-1"},
    {"population": "medium"},
    {"gamma": 1.0},
    {"minibatch": 64, "replay_capacity": 32},
    {"duration_ms": 10.5},
    {"hidden_layers": []},
    {"peak_window_start": 500, "peak_window_end": 400},
    {"epsilon_min": 0.5, "epsilon_start": 0.2},
])
def test_invalid_values_rejected(overrides):
    with pytest.raises(ConfigError):
        ScenarioConfig().replace(**overrides)


def test_replace_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ScenarioConfig().replace(n_users=5)


def test_presets_override_shape_and_population():
    cfg = ScenarioConfig(traffic_preset="beta-30-40", population="high")
    profile = cfg.traffic_profile()
    assert (profile.alpha, profile.beta, profile.n_ue) == (30.0, 40.0, 50000)


def test_text_round_trip():
    cfg = ScenarioConfig(n_ue=1234, hidden_layers=[32, 16], plain_dqn_target=True, learning_rate=3e-4,
                         traffic_preset="beta-6-8")
    assert ScenarioConfig.from_text(cfg.to_text()) == cfg


def test_environment_overrides_file(tmp_path):
    path = tmp_path / "scenario.env"
    path.write_text("n_ue=700\nseed=3\nn_cg=3\n")
    cfg = ScenarioConfig.from_env(path, environ={"MCG_SEED": "11", "HOME": "/root"})
    assert (cfg.n_ue, cfg.seed, cfg.n_cg) == (700, 11, 3)


def test_environment_without_file():
    cfg = ScenarioConfig.from_env(environ={"MCG_EPISODES": "7", "MCG_USE_WARMUP": "false"})
    assert cfg.episodes == 7
    assert cfg.use_warmup is False


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ScenarioConfig.from_env(tmp_path / "absent.env", environ={})


def test_unknown_environment_key():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_env(environ={"MCG_NOT_A_FIELD": "1"})


TEMPLATES = Path(__file__).resolve().parent.parent / "config"


@pytest.mark.parametrize("name", sorted(p.name for p in TEMPLATES.glob("*.env")))
def test_shipped_templates_load(name):
    cfg = ScenarioConfig.from_env(TEMPLATES / name, environ={})
    assert cfg.traffic_profile().n_ue >= 2000


def test_desk_template_matches_defaults():
    assert ScenarioConfig.from_env(TEMPLATES / "desk.env", environ={}) == ScenarioConfig()
    high = ScenarioConfig.from_env(TEMPLATES / "high-traffic.env", environ={})
    assert high.traffic_profile().n_ue == 50000
