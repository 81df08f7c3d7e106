"""
Subframe-by-subframe MCG-GF-NOMA environment and the episode loop shared by every policy.
"""
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple

import numpy as np

from mcgsim.actions import ActionCatalog
from mcgsim.agent import JointAction, SubframeObservation, reward
from mcgsim.config import ScenarioConfig
from mcgsim.errors import FeasibilityError, PreconditionError
from mcgsim.frame import LatencyRecord, SubframeSchedule, average_latency, latency, validate_schedule
from mcgsim.phy import decode_grant, place_ues, select_ctus
from mcgsim.traffic import ArrivalCursor, TrafficProfile, sample_activation_times

# stream tags mixed into the seed sequence of an episode
_ACTIVATION_STREAM = 0
_PLACEMENT_STREAM = 1
_POLICY_STREAM = 2
_PICK_STREAM = 3
_REPLAY_STREAM = 4
_GRANT_STREAM = 5


@dataclass(frozen=True)
class GrantOutcome:
    grant_index: int
    n_ctu: int
    n_start: int
    n_repe: int
    arrivals: int
    n_collided: int
    n_singleton: int
    n_suc: int
    n_fdec: int
    n_ic: int
    n_sc: int
    n_cc: int
    latency: LatencyRecord
    # mean residual wait of the served devices plus RTT; diagnostic only
    actual_latency_slots: Optional[float]


@dataclass(frozen=True)
class SubframeResult:
    subframe_index: int
    action: JointAction
    schedule: SubframeSchedule
    grants: Tuple[GrantOutcome, ...]
    observation: SubframeObservation
    reward: float
    avg_latency_slots: Optional[float]
    avg_latency_ms: Optional[float]
    spill: int
    done: bool

    @property
    def arrivals(self) -> int:
        return sum(g.arrivals for g in self.grants)


def episode_activations(profile: TrafficProfile, seed: int, episode: int) -> np.ndarray:
    """Activation instants (ms) of every device in one episode."""
    return sample_activation_times(profile, [seed, episode, _ACTIVATION_STREAM])


class MCGEnvironment:
    """
    One cell over one bursty-traffic window. reset() draws the activations and positions of an
    episode; step() configures the next subframe's grants and returns what the BS observed.
    """

    def __init__(self, config: ScenarioConfig, catalog: ActionCatalog):
        self.config = config
        self.catalog = catalog
        self.numerology = config.numerology()
        self.channel = config.channel()
        self.profile = config.traffic_profile()
        self.n_subframes = config.n_subframes
        self.episode: Optional[int] = None
        self.t = 0

    def reset(self, episode: int, seed: int):
        self.episode = episode
        self.seed = seed
        self.activations_ms = episode_activations(self.profile, seed, episode)
        self.distances = place_ues(
            self.profile.n_ue, self.channel.cell_radius_m, [seed, episode, _PLACEMENT_STREAM]
        )
        self.cursor = ArrivalCursor(self.activations_ms, self.numerology.tti_ms)
        self.previous: Optional[SubframeSchedule] = None
        self.t = 0

    @property
    def done(self) -> bool:
        return self.episode is not None and self.t >= self.n_subframes

    def step(self, action: JointAction) -> SubframeResult:
        if self.episode is None:
            raise PreconditionError("reset() must be called before step()")
        if self.done:
            raise PreconditionError(f"episode already ran its {self.n_subframes} subframes")
        self.t += 1
        schedule = self.catalog.schedule(action[0], action[1], self.t)
        report = validate_schedule(schedule, self.config.budget)
        if not report.ok:
            raise FeasibilityError(f"subframe {self.t}: {report.describe()}")

        grants = []
        for i, grant in enumerate(schedule.grants, start=1):
            start_slot = schedule.absolute_start(i)
            ue_ids = self.cursor.take_until(start_slot)
            transmissions, census = select_ctus(
                ue_ids, self.distances, grant, i,
                [self.seed, self.episode, _GRANT_STREAM, self.t, i],
            )
            decoded = decode_grant(transmissions, census, self.channel, grant)
            record = latency(schedule, self.previous, i)
            actual = None
            if decoded.n_suc:
                served = np.fromiter(decoded.successes, dtype=np.int64)
                waits = start_slot - self.cursor.activation_slots[served]
                actual = float(np.mean(waits)) + record.rtt_slots
            grants.append(GrantOutcome(
                grant_index=i,
                n_ctu=grant.n_ctu,
                n_start=grant.n_start,
                n_repe=grant.n_repe,
                arrivals=int(len(ue_ids)),
                n_collided=decoded.n_collided_ues,
                n_singleton=decoded.n_singleton_ues,
                n_suc=decoded.n_suc,
                n_fdec=decoded.n_fdec,
                n_ic=census.n_ic,
                n_sc=census.n_sc,
                n_cc=census.n_cc,
                latency=record,
                actual_latency_slots=actual,
            ))

        observation = SubframeObservation(
            n_cc=sum(g.n_cc for g in grants),
            n_ic=sum(g.n_ic for g in grants),
            n_sc=sum(g.n_sc for g in grants),
            n_suc=sum(g.n_suc for g in grants),
            n_fdec=sum(g.n_fdec for g in grants),
        )
        avg = average_latency([g.latency.total_slots for g in grants], [g.n_suc for g in grants])
        self.previous = schedule
        done = self.t == self.n_subframes
        return SubframeResult(
            subframe_index=self.t,
            action=(int(action[0]), int(action[1])),
            schedule=schedule,
            grants=tuple(grants),
            observation=observation,
            reward=reward(observation),
            avg_latency_slots=avg,
            avg_latency_ms=None if avg is None else avg * self.numerology.tti_ms,
            spill=int(self.cursor.remaining().size) if done else 0,
            done=done,
        )


@dataclass
class EpisodeResult:
    episode: int
    policy: str
    subframes: List[SubframeResult]
    epsilon: float
    losses: List[float]

    @property
    def total_reward(self) -> float:
        return float(sum(s.reward for s in self.subframes))

    @property
    def mean_reward(self) -> float:
        return self.total_reward / len(self.subframes) if self.subframes else 0.0

    @property
    def mean_loss(self) -> Optional[float]:
        return float(np.mean(self.losses)) if self.losses else None


def episode_rngs(seed: int, episode: int) -> Tuple[np.random.Generator, ...]:
    """Policy coin, random-action and replay-sampling streams of one episode."""
    return tuple(
        np.random.default_rng([seed, episode, tag])
        for tag in (_POLICY_STREAM, _PICK_STREAM, _REPLAY_STREAM)
    )


def run_episode(
    env: MCGEnvironment,
    policy,
    episode: int,
    seed: int,
    epsilon: float = 0.0,
    train: bool = False,
) -> EpisodeResult:
    """
    Run the T subframes of one episode under policy.

    Each subframe: build the state, pick the joint action, simulate the grants, then (when
    training a learned policy) store the shared-reward transition in both replays and run one
    train step.
    """
    bundle = getattr(policy, "bundle", None)
    if train and bundle is None:
        raise PreconditionError(f"policy {policy.name} has nothing to train")
    env.reset(episode, seed)
    coin_rng, pick_rng, replay_rng = episode_rngs(seed, episode)
    encoder = policy.encoder
    history: Deque[Tuple[JointAction, SubframeObservation]] = deque(
        maxlen=encoder.memory if encoder else 1
    )
    state = encoder.encode(history) if encoder else None

    subframes: List[SubframeResult] = []
    losses: List[float] = []
    while not env.done:
        action = policy.select(state, epsilon, coin_rng, pick_rng)
        result = env.step(action)
        subframes.append(result)
        history.append((result.action, result.observation))
        next_state = encoder.encode(history) if encoder else None
        if train:
            bundle.remember(state, result.action, result.reward, next_state, result.done)
            loss = bundle.train(replay_rng)
            if loss is not None:
                losses.append(loss)
        state = next_state
    return EpisodeResult(episode, policy.name, subframes, epsilon, losses)
