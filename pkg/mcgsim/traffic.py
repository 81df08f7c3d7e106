"""
Bursty mURLLC traffic: time-limited Beta activations and their binning onto configured grants.

Each device activates exactly once per episode at a Beta(alpha, beta) instant scaled to
[0, T]. A device can only use the first grant starting strictly after its activation
(slotted-Aloha: a packet arriving at a grant boundary waits for the next grant).
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy import special

from mcgsim.errors import ConfigError, PreconditionError
from mcgsim.frame import SubframeSchedule

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


@dataclass(frozen=True)
class TrafficProfile:
    alpha: float = 3.0
    beta: float = 4.0
    duration_ms: float = 1000.0
    n_ue: int = 10000

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError(f"Beta shapes must be positive, got ({self.alpha}, {self.beta})")
        if self.duration_ms <= 0:
            raise ConfigError(f"traffic duration must be positive, got {self.duration_ms}")
        if self.n_ue < 0:
            raise ConfigError(f"n_ue must be >= 0, got {self.n_ue}")

    @property
    def mean_ms(self) -> float:
        return self.duration_ms * self.alpha / (self.alpha + self.beta)

    @property
    def mode_ms(self) -> float:
        """Peak of the activation density; only meaningful for alpha, beta > 1."""
        return self.duration_ms * (self.alpha - 1) / (self.alpha + self.beta - 2)


# Beta shapes studied for the bursty profile and the two population sizes.
TRAFFIC_PRESETS: Dict[str, Tuple[float, float]] = {
    "beta-3-4": (3.0, 4.0),
    "beta-6-8": (6.0, 8.0),
    "beta-30-40": (30.0, 40.0),
}
POPULATION_PRESETS: Dict[str, int] = {"low": 10000, "high": 50000}


@dataclass(frozen=True, eq=False)
class ArrivalBatch:
    """Devices that transmit on one grant: those activated inside its packet interval."""

    subframe_index: int
    grant_index: int
    interval: Tuple[float, float]
    ue_ids: np.ndarray
    activation_slots: np.ndarray

    def __len__(self) -> int:
        return int(self.ue_ids.size)


def sample_activation_times(profile: TrafficProfile, rng_seed: SeedLike) -> np.ndarray:
    """Activation instant (ms) of every device, indexed by UE id."""
    rng = np.random.default_rng(rng_seed)
    return rng.beta(profile.alpha, profile.beta, size=profile.n_ue) * profile.duration_ms


def arrival_rate(profile: TrafficProfile, interval: Tuple[float, float]) -> float:
    """Expected number of activations inside (lo, hi] ms: N_UE times the Beta mass there."""
    lo, hi = interval
    if hi < lo:
        raise PreconditionError(f"inverted interval ({lo}, {hi})")
    if lo < 0 or hi > profile.duration_ms:
        raise PreconditionError(
            f"interval ({lo}, {hi}) is outside the traffic window [0, {profile.duration_ms}]"
        )
    if hi == lo:
        return 0.0
    T = profile.duration_ms
    mass = special.betainc(profile.alpha, profile.beta, hi / T) - special.betainc(
        profile.alpha, profile.beta, lo / T
    )
    return float(profile.n_ue * mass)


def expected_arrivals_per_subframe(profile: TrafficProfile, subframe_ms: float = 1.0) -> np.ndarray:
    """Expected new activations in each subframe of the traffic window."""
    edges = np.arange(0.0, profile.duration_ms + subframe_ms / 2, subframe_ms)
    edges[-1] = profile.duration_ms
    cdf = special.betainc(profile.alpha, profile.beta, edges / profile.duration_ms)
    return profile.n_ue * np.diff(cdf)


class ArrivalCursor:
    """
    Hands out activated devices in time order as grants open.

    take_until(slot) returns every device activated strictly before that absolute slot and not
    handed out yet; whatever remains after the last grant of the horizon is spill.
    """

    def __init__(self, activation_ms: np.ndarray, tti_ms: float):
        self.activation_slots = np.asarray(activation_ms, dtype=float) / tti_ms
        self.order = np.argsort(self.activation_slots, kind="stable")
        self._sorted = self.activation_slots[self.order]
        self.position = 0

    def take_until(self, slot: float) -> np.ndarray:
        end = int(np.searchsorted(self._sorted, slot, side="left"))
        end = max(end, self.position)
        ids = self.order[self.position:end]
        self.position = end
        return ids

    def remaining(self) -> np.ndarray:
        return self.order[self.position:]


@dataclass(frozen=True, eq=False)
class BinnedArrivals:
    batches: Tuple[ArrivalBatch, ...]
    spill_ue_ids: np.ndarray

    @property
    def spill(self) -> int:
        return int(self.spill_ue_ids.size)

    def for_subframe(self, t: int) -> List[ArrivalBatch]:
        return [b for b in self.batches if b.subframe_index == t]


def bin_arrivals(
    activations_ms: np.ndarray, schedules: Sequence[SubframeSchedule]
) -> BinnedArrivals:
    """
    Assign each activation to the earliest grant starting strictly after it.

    schedules must be the consecutive subframes 1..T of one episode. Activations after the last
    grant start of the horizon are returned as spill.
    """
    if not schedules:
        raise PreconditionError("bin_arrivals needs at least one schedule")
    for expected, s in enumerate(schedules, start=1):
        if s.subframe_index != expected:
            raise PreconditionError(
                f"schedules must cover subframes 1..{len(schedules)} in order; "
                f"found subframe {s.subframe_index} at position {expected}"
            )

    tti_ms = schedules[0].numerology.tti_ms
    cursor = ArrivalCursor(activations_ms, tti_ms)
    batches: List[ArrivalBatch] = []
    previous_start = 0.0
    for s in schedules:
        for i in range(1, s.n_cg + 1):
            start = float(s.absolute_start(i))
            ids = cursor.take_until(start)
            batches.append(ArrivalBatch(
                subframe_index=s.subframe_index,
                grant_index=i,
                interval=(previous_start, start),
                ue_ids=ids,
                activation_slots=cursor.activation_slots[ids],
            ))
            previous_start = start
    return BinnedArrivals(tuple(batches), cursor.remaining())


def arrival_histogram(activations_ms: np.ndarray, duration_ms: float, subframe_ms: float = 1.0) -> np.ndarray:
    """Empirical new activations per subframe."""
    n_bins = int(round(duration_ms / subframe_ms))
    counts, _ = np.histogram(activations_ms, bins=n_bins, range=(0.0, duration_ms))
    return counts
