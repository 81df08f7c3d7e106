import numpy as np
import pytest

from mcgsim.config import ScenarioConfig
from mcgsim.frame import FrameNumerology


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def numerology():
    return FrameNumerology(mu=2, n_sym=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def tiny_config():
    """A 30-subframe cell with a few hundred devices and a small network."""
    return ScenarioConfig(
        n_ue=300,
        duration_ms=30.0,
        n_cg=2,
        episodes=2,
        eval_episodes=2,
        warmup=32,
        replay_capacity=500,
        target_sync=10,
        hidden_layers=[16, 16],
        history=2,
        peak_window_start=10,
        peak_window_end=20,
    )
