"""
Scenario configuration: a flat key=value file plus MCG_<FIELD> environment overrides.

Grammar (one entry per line, '#' starts a comment, keys are case-insensitive):

    n_ue=2000
    ctu_alphabet=[8, 16, 24, 32, 40, 48, 56]
    start_alphabet=0,1,2,3,4
    use_warmup=true

Integers, floats, booleans (true/false/yes/no/1/0), strings and integer lists are supported.
"""
import io
import json
import os
import typing
from dataclasses import dataclass, field, fields
from dataclasses import replace as dataclass_replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv

from mcgsim.actions import ActionCatalog
from mcgsim.agent import DqnHyperparams, EpsilonSchedule
from mcgsim.errors import ConfigError, SimulatorError
from mcgsim.frame import FrameNumerology
from mcgsim.phy import ChannelParams
from mcgsim.traffic import POPULATION_PRESETS, TRAFFIC_PRESETS, TrafficProfile

ENV_PREFIX = "MCG_"
POLICIES = ("learned", "scg-baseline", "random-mcg", "fixed-mcg")
_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


@dataclass(frozen=True)
class ScenarioConfig:
    """All simulation and learning parameters of one scenario. Defaults are the desk scale."""

    # numerology
    mu: int = 2
    n_sym: int = 7

    # channel
    path_loss_exponent: float = 4.0
    tx_power_dbm: float = 23.0
    noise_power_dbm: float = -132.0
    sinr_threshold_db: float = -10.0
    cell_radius_m: float = 10000.0

    # traffic
    alpha: float = 3.0
    beta: float = 4.0
    duration_ms: float = 1000.0
    n_ue: int = 2000
    traffic_preset: str = ""
    population: str = ""

    # grants
    n_cg: int = 5
    budget: int = 64
    ctu_alphabet: List[int] = field(default_factory=lambda: [8, 16, 24, 32, 40, 48, 56])
    start_alphabet: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    rb_count: int = 4
    scg_start_slot: int = 0

    # learning
    learning_rate: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_min: float = 0.1
    epsilon_decay_fraction: float = 0.4
    gamma: float = 0.5
    minibatch: int = 32
    replay_capacity: int = 10000
    target_sync: int = 1000
    history: int = 4
    hidden_layers: List[int] = field(default_factory=lambda: [128, 128])
    rmsprop_decay: float = 0.95
    rmsprop_epsilon: float = 1e-6
    warmup: int = 1000
    use_warmup: bool = True
    plain_dqn_target: bool = False
    one_hot_actions: bool = False

    # run
    episodes: int = 300
    eval_episodes: int = 50
    policy: str = "learned"
    fixed_ctu_index: int = 0
    fixed_start_index: int = 0
    peak_window_start: int = 350
    peak_window_end: int = 450
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if _is_int_list(f.type):
                object.__setattr__(self, f.name, [int(v) for v in getattr(self, f.name)])
        if self.traffic_preset and self.traffic_preset not in TRAFFIC_PRESETS:
            raise ConfigError(
                f"unknown traffic_preset '{self.traffic_preset}', "
                f"expected one of {sorted(TRAFFIC_PRESETS)}"
            )
        if self.population and self.population not in POPULATION_PRESETS:
            raise ConfigError(
                f"unknown population '{self.population}', expected one of {sorted(POPULATION_PRESETS)}"
            )
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy '{self.policy}', expected one of {list(POLICIES)}")
        if self.budget <= 0:
            raise ConfigError(f"budget must be positive, got {self.budget}")
        for name in ("episodes", "eval_episodes", "minibatch", "replay_capacity", "target_sync",
                     "history", "workers", "n_cg"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.minibatch > self.replay_capacity:
            raise ConfigError("minibatch cannot exceed replay_capacity")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            raise ConfigError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ConfigError(f"hidden_layers must be positive sizes, got {self.hidden_layers}")
        if self.peak_window_start > self.peak_window_end:
            raise ConfigError("peak_window_start is after peak_window_end")
        # construct the physical pieces once so their invariants are checked at load time
        self.numerology()
        self.channel()
        profile = self.traffic_profile()
        if profile.duration_ms != int(profile.duration_ms):
            raise ConfigError(f"duration_ms must be a whole number of subframes, got {self.duration_ms}")

    # -- builders ----------------------------------------------------------

    def numerology(self) -> FrameNumerology:
        return FrameNumerology(self.mu, self.n_sym)

    def channel(self) -> ChannelParams:
        return ChannelParams(
            path_loss_exponent=self.path_loss_exponent,
            tx_power_dbm=self.tx_power_dbm,
            noise_power_dbm=self.noise_power_dbm,
            sinr_threshold_db=self.sinr_threshold_db,
            cell_radius_m=self.cell_radius_m,
        )

    def traffic_profile(self) -> TrafficProfile:
        alpha, beta = TRAFFIC_PRESETS[self.traffic_preset] if self.traffic_preset else (self.alpha, self.beta)
        n_ue = POPULATION_PRESETS[self.population] if self.population else self.n_ue
        return TrafficProfile(alpha=alpha, beta=beta, duration_ms=self.duration_ms, n_ue=n_ue)

    @property
    def n_subframes(self) -> int:
        return int(self.duration_ms)

    def catalog(self, n_cg: Optional[int] = None) -> ActionCatalog:
        return ActionCatalog.build(
            self.ctu_alphabet,
            self.start_alphabet,
            self.n_cg if n_cg is None else n_cg,
            self.budget,
            self.numerology(),
            self.rb_count,
        )

    def scg_catalog(self) -> ActionCatalog:
        """Single grant holding the whole budget, starting at scg_start_slot."""
        return ActionCatalog.build(
            [self.budget], [self.scg_start_slot], 1, self.budget, self.numerology(), self.rb_count
        )

    def hyperparams(self) -> DqnHyperparams:
        return DqnHyperparams(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            rmsprop_decay=self.rmsprop_decay,
            rmsprop_epsilon=self.rmsprop_epsilon,
            minibatch=self.minibatch,
            replay_capacity=self.replay_capacity,
            target_sync=self.target_sync,
            hidden_layers=tuple(self.hidden_layers),
            warmup=self.warmup,
            use_warmup=self.use_warmup,
            plain_dqn_target=self.plain_dqn_target,
        )

    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(
            start=self.epsilon_start,
            minimum=self.epsilon_min,
            decay_fraction=self.epsilon_decay_fraction,
            total_episodes=self.episodes,
        )

    # -- serialization -----------------------------------------------------

    def replace(self, **overrides) -> "ScenarioConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return dataclass_replace(self, **overrides)
        except SimulatorError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            elif isinstance(value, list):
                text = json.dumps(value)
            else:
                text = str(value)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]]) -> "ScenarioConfig":
        """Build from raw string values; keys are matched case-insensitively."""
        by_name = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().lower()
            if name not in by_name:
                raise ConfigError(f"unknown configuration key '{key}'")
            kwargs[name] = _coerce(name, by_name[name].type, raw)
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except SimulatorError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        return cls.from_mapping(dotenv_values(stream=io.StringIO(text)))

    @classmethod
    def from_env(
        cls,
        config_file: Optional[Union[str, Path]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "ScenarioConfig":
        """
        File values first, then MCG_<FIELD> variables from the environment on top.

        A .env file in the working directory is loaded into the process environment without
        overriding variables that are already set.
        """
        values: Dict[str, Optional[str]] = {}
        if config_file is not None:
            path = Path(config_file)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            values.update({k.lower(): v for k, v in dotenv_values(path).items()})
        if environ is None:
            load_dotenv(override=False)
            environ = os.environ
        for key, raw in environ.items():
            if key.upper().startswith(ENV_PREFIX):
                values[key[len(ENV_PREFIX):].lower()] = raw
        return cls.from_mapping(values)


def _is_int_list(tp) -> bool:
    return typing.get_origin(tp) in (list, List)


def _coerce(name: str, tp, raw: Optional[str]):
    if raw is None:
        raise ConfigError(f"{name}: missing value")
    text = raw.strip()
    try:
        if _is_int_list(tp):
            if text.startswith("["):
                items = json.loads(text)
            else:
                items = [s for s in text.split(",") if s.strip()]
            return [_parse_int(name, v) for v in items]
        if tp is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tp is int:
            return _parse_int(name, text)
        if tp is float:
            return float(text)
        return text
    except (ValueError, json.JSONDecodeError) as e:
        raise ConfigError(f"{name}: {e}") from e


def _parse_int(name: str, value) -> int:
    if isinstance(value, bool):
        raise ValueError(f"expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value != int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    return int(str(value).strip())
