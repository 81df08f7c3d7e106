"""
Cooperative multi-agent DDQN: state encoding, replay, epsilon-greedy selection, TD targets,
training steps and bundle checkpoints.

Two agents share one state and one reward. The "ctu" agent owns the CTU split and the "start"
agent owns the starting slots; each keeps its own online net, target net and replay memory.
"""
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from mcgsim.actions import ActionCatalog
from mcgsim.errors import FeasibilityError, NumericalError
from mcgsim.nn import (
    Mlp,
    RmsPropState,
    backward_batch,
    clone_weights,
    copy_weights_into,
    forward,
    load_weights,
    rmsprop_step,
    save_weights,
)

AGENT_NAMES = ("ctu", "start")
BUNDLE_FORMAT = 1

JointAction = Tuple[int, int]


@dataclass(frozen=True)
class SubframeObservation:
    """Per-subframe counts summed over the grants."""

    n_cc: int = 0
    n_ic: int = 0
    n_sc: int = 0
    n_suc: int = 0
    n_fdec: int = 0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.n_cc, self.n_ic, self.n_sc, self.n_suc, self.n_fdec], dtype=float)


OBS_DIM = 5


def reward(observation: SubframeObservation) -> float:
    """Shared reward: devices served within the subframe."""
    return float(observation.n_suc)


@dataclass(frozen=True)
class StateEncoder:
    """
    Layout of the agent state: (action, counts) of subframe t-1, then t-2, ... back to t-memory.

    Counts are divided by the CTU budget. Action indices are encoded as (index + 1) / size so an
    empty history slot (all zeros) never collides with action 0; with one_hot the two indices are
    one-hot vectors instead.
    """

    memory: int
    n_ctu_actions: int
    n_start_actions: int
    budget: int
    one_hot: bool = False

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError(f"state memory must be >= 1, got {self.memory}")

    @property
    def action_dim(self) -> int:
        return self.n_ctu_actions + self.n_start_actions if self.one_hot else 2

    @property
    def entry_dim(self) -> int:
        return self.action_dim + OBS_DIM

    @property
    def d_in(self) -> int:
        return self.memory * self.entry_dim

    def encode_action(self, action: JointAction) -> np.ndarray:
        ctu, start = action
        if self.one_hot:
            vec = np.zeros(self.action_dim)
            vec[ctu] = 1.0
            vec[self.n_ctu_actions + start] = 1.0
            return vec
        return np.array([(ctu + 1) / self.n_ctu_actions, (start + 1) / self.n_start_actions])

    def encode(self, history: Sequence[Tuple[JointAction, SubframeObservation]]) -> np.ndarray:
        """history is chronological; only its last `memory` entries are used."""
        state = np.zeros(self.d_in)
        recent = list(history)[-self.memory:]
        for slot, (action, obs) in enumerate(reversed(recent)):
            offset = slot * self.entry_dim
            state[offset:offset + self.action_dim] = self.encode_action(action)
            state[offset + self.action_dim:offset + self.entry_dim] = obs.as_array() / self.budget
        return state

    def layout(self) -> dict:
        return asdict(self)


def build_state(
    history: Sequence[Tuple[JointAction, SubframeObservation]], encoder: StateEncoder
) -> np.ndarray:
    if len(history) > encoder.memory:
        raise ValueError(f"history holds {len(history)} entries, memory is {encoder.memory}")
    return encoder.encode(history)


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool = False


class ReplayMemory:
    """FIFO ring buffer of transitions; minibatches are drawn without replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.buffer: Deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.buffer)

    def push(self, transition: Transition):
        self.buffer.append(transition)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        if batch_size > len(self.buffer):
            raise ValueError(f"cannot sample {batch_size} transitions from {len(self.buffer)}")
        picks = rng.choice(len(self.buffer), size=batch_size, replace=False)
        return [self.buffer[int(k)] for k in picks]


@dataclass
class EpsilonSchedule:
    """Linear decay from start to minimum over the first fraction of training episodes."""

    start: float = 1.0
    minimum: float = 0.1
    decay_fraction: float = 0.4
    total_episodes: int = 300

    def __post_init__(self):
        if not 0 <= self.minimum <= self.start <= 1:
            raise ValueError(f"need 0 <= minimum <= start <= 1, got {self.minimum}, {self.start}")

    def value(self, episode: int) -> float:
        decay_episodes = self.decay_fraction * self.total_episodes
        if decay_episodes <= 0:
            return self.minimum
        frac = min(episode / decay_episodes, 1.0)
        return self.start + (self.minimum - self.start) * frac


@dataclass(frozen=True)
class DqnHyperparams:
    gamma: float = 0.5
    learning_rate: float = 1e-4
    rmsprop_decay: float = 0.95
    rmsprop_epsilon: float = 1e-6
    minibatch: int = 32
    replay_capacity: int = 10000
    target_sync: int = 1000
    hidden_layers: Tuple[int, ...] = (128, 128)
    warmup: int = 1000
    use_warmup: bool = True
    plain_dqn_target: bool = False

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))

    @property
    def train_threshold(self) -> int:
        """Replay size from which a train step runs each subframe."""
        return max(self.minibatch, self.warmup) if self.use_warmup else self.minibatch


@dataclass
class DqnAgent:
    name: str
    online: Mlp
    target: Mlp
    optimizer: RmsPropState
    memory: ReplayMemory
    train_steps: int = 0

    @property
    def n_actions(self) -> int:
        return self.online.d_out


def q_values(agent: DqnAgent, state: np.ndarray) -> np.ndarray:
    return forward(agent.online, state)


def select_action(
    agent: DqnAgent,
    state: np.ndarray,
    epsilon: float,
    rng: np.random.Generator,
    pick_rng: Optional[np.random.Generator] = None,
) -> int:
    """
    Epsilon-greedy choice; greedy ties go to the lowest index.

    The explore/exploit coin comes from rng and the random action from pick_rng (rng when
    omitted), so a fully exploring agent draws the same actions as the random baseline.
    """
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0 and rng.random() < epsilon:
        return int((pick_rng or rng).integers(agent.n_actions))
    return int(np.argmax(q_values(agent, state)))


def td_targets(
    online: Mlp,
    target: Mlp,
    rewards: np.ndarray,
    next_states: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    plain_dqn_target: bool = False,
) -> np.ndarray:
    """
    Double-DQN targets R + gamma Q_target(S', argmax_a Q_online(S', a)).

    With plain_dqn_target the bootstrap is max_a Q_target(S', a). Terminal transitions bootstrap
    nothing.
    """
    next_states = np.atleast_2d(next_states)
    q_next_target = forward(target, next_states)
    if plain_dqn_target:
        bootstrap = q_next_target.max(axis=1)
    else:
        best = np.argmax(forward(online, next_states), axis=1)
        bootstrap = q_next_target[np.arange(len(best)), best]
    not_done = 1.0 - np.asarray(dones, dtype=float)
    return np.asarray(rewards, dtype=float) + gamma * not_done * bootstrap


def td_target(
    transition: Transition, target: Mlp, online: Mlp, gamma: float, plain_dqn_target: bool = False
) -> float:
    return float(td_targets(online, target, np.array([transition.reward]),
                            transition.next_state[None, :], np.array([transition.done]),
                            gamma, plain_dqn_target)[0])


def train_step(
    agent: DqnAgent, batch: Sequence[Transition], hyper: DqnHyperparams
) -> float:
    """One RMSProp step on a minibatch; syncs the target net every target_sync steps."""
    states = np.stack([tr.state for tr in batch])
    actions = np.array([tr.action for tr in batch])
    targets = td_targets(
        agent.online,
        agent.target,
        np.array([tr.reward for tr in batch]),
        np.stack([tr.next_state for tr in batch]),
        np.array([tr.done for tr in batch]),
        hyper.gamma,
        hyper.plain_dqn_target,
    )
    grads, loss = backward_batch(agent.online, states, actions, targets)
    if not np.isfinite(loss):
        raise NumericalError(
            f"agent {agent.name}: non-finite loss at train step {agent.train_steps}"
        )
    rmsprop_step(agent.optimizer, agent.online, grads)
    agent.train_steps += 1
    if agent.train_steps % hyper.target_sync == 0:
        copy_weights_into(agent.target, agent.online)
    return loss


def make_agent(name: str, d_in: int, n_actions: int, hyper: DqnHyperparams,
               rng: np.random.Generator) -> DqnAgent:
    online = Mlp.initialize([d_in, *hyper.hidden_layers, n_actions], rng)
    return DqnAgent(
        name=name,
        online=online,
        target=clone_weights(online),
        optimizer=RmsPropState(hyper.learning_rate, hyper.rmsprop_decay, hyper.rmsprop_epsilon),
        memory=ReplayMemory(hyper.replay_capacity),
    )


@dataclass
class AgentBundle:
    agents: Dict[str, DqnAgent]
    encoder: StateEncoder
    hyper: DqnHyperparams
    fingerprint: str
    episodes_done: int = 0
    losses: List[float] = field(default_factory=list, repr=False)

    @classmethod
    def create(
        cls,
        catalog: ActionCatalog,
        hyper: DqnHyperparams,
        memory: int,
        rng_seed,
        one_hot: bool = False,
    ) -> "AgentBundle":
        n_ctu, n_start = catalog.sizes
        encoder = StateEncoder(memory, n_ctu, n_start, catalog.budget, one_hot)
        seq = np.random.SeedSequence(rng_seed)
        ctu_seq, start_seq = seq.spawn(2)
        agents = {
            "ctu": make_agent("ctu", encoder.d_in, n_ctu, hyper, np.random.default_rng(ctu_seq)),
            "start": make_agent("start", encoder.d_in, n_start, hyper,
                                np.random.default_rng(start_seq)),
        }
        return cls(agents, encoder, hyper, catalog.fingerprint())

    def select(
        self,
        state: np.ndarray,
        epsilon: float,
        rng: np.random.Generator,
        pick_rng: Optional[np.random.Generator] = None,
    ) -> JointAction:
        return (
            select_action(self.agents["ctu"], state, epsilon, rng, pick_rng),
            select_action(self.agents["start"], state, epsilon, rng, pick_rng),
        )

    def remember(self, state: np.ndarray, action: JointAction, r: float,
                 next_state: np.ndarray, done: bool):
        """Both agents store the same (S, R, S') and differ only in their own action."""
        for name, a in zip(AGENT_NAMES, action):
            self.agents[name].memory.push(Transition(state, a, r, next_state, done))

    def ready(self) -> bool:
        threshold = self.hyper.train_threshold
        return all(len(a.memory) >= threshold for a in self.agents.values())

    def train(self, rng: np.random.Generator) -> Optional[float]:
        """One train step per agent once replay is warm; returns the mean loss."""
        if not self.ready():
            return None
        losses = []
        for name in AGENT_NAMES:
            agent = self.agents[name]
            batch = agent.memory.sample(self.hyper.minibatch, rng)
            losses.append(train_step(agent, batch, self.hyper))
        loss = float(np.mean(losses))
        self.losses.append(loss)
        return loss

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, agent in self.agents.items():
            save_weights(directory / f"online_{name}.npz", agent.online, agent.optimizer)
            save_weights(directory / f"target_{name}.npz", agent.target)
        meta = {
            "format_version": BUNDLE_FORMAT,
            "episodes_done": self.episodes_done,
            "train_steps": {name: a.train_steps for name, a in self.agents.items()},
            "catalog_fingerprint": self.fingerprint,
            "encoder": self.encoder.layout(),
            "hyperparameters": {**asdict(self.hyper), "hidden_layers": list(self.hyper.hidden_layers)},
        }
        (directory / "bundle.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path], catalog: ActionCatalog) -> "AgentBundle":
        """Restore a bundle; the stored catalog fingerprint must match the given catalog."""
        directory = Path(directory)
        meta = json.loads((directory / "bundle.json").read_text())
        if meta.get("format_version") != BUNDLE_FORMAT:
            raise ValueError(f"unsupported bundle format {meta.get('format_version')}")
        if meta["catalog_fingerprint"] != catalog.fingerprint():
            raise FeasibilityError(
                f"checkpoint was trained on catalog {meta['catalog_fingerprint']}, "
                f"current configuration gives {catalog.fingerprint()}"
            )
        encoder = StateEncoder(**meta["encoder"])
        hyper = DqnHyperparams(**meta["hyperparameters"])
        agents = {}
        for name, n_actions in zip(AGENT_NAMES, catalog.sizes):
            sizes = [encoder.d_in, *hyper.hidden_layers, n_actions]
            online, opt = load_weights(directory / f"online_{name}.npz", sizes)
            target, _ = load_weights(directory / f"target_{name}.npz", sizes)
            if opt is None:
                opt = RmsPropState(hyper.learning_rate, hyper.rmsprop_decay, hyper.rmsprop_epsilon)
            agents[name] = DqnAgent(name, online, target, opt, ReplayMemory(hyper.replay_capacity),
                                    train_steps=int(meta["train_steps"][name]))
        return cls(agents, encoder, hyper, meta["catalog_fingerprint"],
                   episodes_done=int(meta["episodes_done"]))
