"""
Grant-configuration policies: the learned CMA-DDQN controller and the baselines it is compared to.
"""
from typing import Optional

import numpy as np

from mcgsim.actions import ActionCatalog
from mcgsim.agent import AgentBundle, JointAction, StateEncoder
from mcgsim.config import ScenarioConfig
from mcgsim.errors import ConfigError


class Policy:
    """Chooses a (ctu action index, start action index) pair for every subframe."""

    name = "policy"
    encoder: Optional[StateEncoder] = None
    bundle: Optional[AgentBundle] = None

    def __init__(self, catalog: ActionCatalog):
        self.catalog = catalog

    def select(self, state, epsilon: float, rng: np.random.Generator,
               pick_rng: np.random.Generator) -> JointAction:
        raise NotImplementedError


class LearnedPolicy(Policy):
    name = "learned"

    def __init__(self, catalog: ActionCatalog, bundle: AgentBundle):
        super().__init__(catalog)
        self.bundle = bundle
        self.encoder = bundle.encoder

    def select(self, state, epsilon, rng, pick_rng):
        return self.bundle.select(state, epsilon, rng, pick_rng)


class FixedPolicy(Policy):
    """Pins one catalog entry for the whole episode."""

    name = "fixed-mcg"

    def __init__(self, catalog: ActionCatalog, ctu_index: int = 0, start_index: int = 0):
        super().__init__(catalog)
        n_ctu, n_start = catalog.sizes
        if not 0 <= ctu_index < n_ctu:
            raise ConfigError(f"fixed_ctu_index={ctu_index} outside [0, {n_ctu})")
        if not 0 <= start_index < n_start:
            raise ConfigError(f"fixed_start_index={start_index} outside [0, {n_start})")
        self.action = (ctu_index, start_index)

    def select(self, state, epsilon, rng, pick_rng):
        return self.action


class ScgBaseline(FixedPolicy):
    """Single configured grant with the whole CTU budget."""

    name = "scg-baseline"

    def __init__(self, catalog: ActionCatalog):
        if catalog.n_cg != 1 or catalog.sizes != (1, 1):
            raise ConfigError("the SCG baseline needs a one-grant, one-action catalog")
        super().__init__(catalog, 0, 0)


class RandomPolicy(Policy):
    """Uniform over both catalogs every subframe."""

    name = "random-mcg"

    def select(self, state, epsilon, rng, pick_rng):
        n_ctu, n_start = self.catalog.sizes
        return int(pick_rng.integers(n_ctu)), int(pick_rng.integers(n_start))


def build_policy(config: ScenarioConfig, name: Optional[str] = None,
                 bundle: Optional[AgentBundle] = None) -> Policy:
    """Policy named by `name` (default config.policy) over the catalog it runs on."""
    name = name or config.policy
    if name == "scg-baseline":
        return ScgBaseline(config.scg_catalog())
    catalog = config.catalog()
    if name == "random-mcg":
        return RandomPolicy(catalog)
    if name == "fixed-mcg":
        return FixedPolicy(catalog, config.fixed_ctu_index, config.fixed_start_index)
    if name == "learned":
        if bundle is None:
            bundle = AgentBundle.create(
                catalog, config.hyperparams(), config.history, [config.seed, 0xC0DE],
                config.one_hot_actions,
            )
        return LearnedPolicy(catalog, bundle)
    raise ConfigError(f"unknown policy '{name}'")
