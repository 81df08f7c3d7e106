"""
Frame arithmetic, configured-grant types and latency accounting.

Slots are 0-based inside a subframe; subframe indices t and grant indices i are 1-based, as in
the latency formulas they implement. A subframe always lasts 1 ms.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from mcgsim.errors import ConfigError, PreconditionError

VALID_MU = (0, 1, 2, 3, 4)
VALID_N_SYM = (2, 4, 7, 14)
SYMBOLS_PER_SLOT = 14
# decode + feedback + UE processing, one TTI each
RTT_OVERHEAD_SLOTS = 3


@dataclass(frozen=True)
class FrameNumerology:
    """NR numerology: SCS factor mu and mini-slot length in OFDM symbols."""

    mu: int = 2
    n_sym: int = 7

    def __post_init__(self):
        if self.mu not in VALID_MU:
            raise ConfigError(f"mu must be one of {VALID_MU}, got {self.mu}")
        if self.n_sym not in VALID_N_SYM:
            raise ConfigError(f"n_sym must be one of {VALID_N_SYM}, got {self.n_sym}")
        if (2 ** self.mu * SYMBOLS_PER_SLOT) % self.n_sym:
            raise ConfigError(
                f"2^{self.mu} x 14 is not divisible by n_sym={self.n_sym}: "
                "a subframe would hold a fractional number of mini-slots"
            )

    @property
    def tti_ms(self) -> float:
        return self.n_sym / 2 ** self.mu / SYMBOLS_PER_SLOT

    @property
    def n_slot(self) -> int:
        return 2 ** self.mu * SYMBOLS_PER_SLOT // self.n_sym


def tti_duration(numerology: FrameNumerology) -> float:
    """Duration of one TTI (mini-slot) in milliseconds."""
    return numerology.tti_ms


def slots_per_subframe(numerology: FrameNumerology) -> int:
    """Number of mini-slots within one 1 ms subframe."""
    return numerology.n_slot


@dataclass(frozen=True)
class GrantConfig:
    """
    One configured grant CG{n_ctu, n_start, n_repe} over rb_count RBs.

    The constructor checks the CTU grid only. The latency and starting-slot constraints are
    schedule-level properties reported by validate_schedule. Use GrantConfig.for_subframe to get
    n_start + n_repe + 3 == n_slot enforced at construction.
    """

    n_ctu: int
    n_start: int
    n_repe: int
    rb_count: int = 4

    def __post_init__(self):
        if self.rb_count <= 0:
            raise ConfigError(f"rb_count must be positive, got {self.rb_count}")
        if self.n_ctu <= 0 or self.n_ctu % self.rb_count:
            raise ConfigError(
                f"n_ctu={self.n_ctu} must be positive and divisible by rb_count={self.rb_count}"
            )
        if self.n_start < 0:
            raise ConfigError(f"n_start must be >= 0, got {self.n_start}")
        if self.n_repe < 1:
            raise ConfigError(f"n_repe must be >= 1, got {self.n_repe}")

    @classmethod
    def for_subframe(cls, n_ctu: int, n_start: int, n_slot: int, rb_count: int = 4) -> "GrantConfig":
        """Build a grant whose repetitions exactly fill the subframe after n_start."""
        if not 0 <= n_start < n_slot - RTT_OVERHEAD_SLOTS:
            raise ConfigError(
                f"n_start={n_start} leaves no room for a repetition in a {n_slot}-slot subframe"
            )
        return cls(n_ctu, n_start, n_slot - RTT_OVERHEAD_SLOTS - n_start, rb_count)

    @property
    def pilots_per_rb(self) -> int:
        return self.n_ctu // self.rb_count

    def ctu_of(self, ctu_index: int) -> Tuple[int, int]:
        """(rb, pilot) pair of a flat CTU index; CTUs are laid out RB-major."""
        return divmod(ctu_index, self.pilots_per_rb)


@dataclass(frozen=True)
class SubframeSchedule:
    """The grants configured for subframe t (1-based)."""

    subframe_index: int
    grants: Tuple[GrantConfig, ...]
    numerology: FrameNumerology = field(default_factory=FrameNumerology)

    def __post_init__(self):
        if self.subframe_index < 1:
            raise PreconditionError(f"subframe_index is 1-based, got {self.subframe_index}")
        if not self.grants:
            raise PreconditionError("a schedule needs at least one grant")
        object.__setattr__(self, "grants", tuple(self.grants))

    @property
    def n_cg(self) -> int:
        return len(self.grants)

    @property
    def n_slot(self) -> int:
        return self.numerology.n_slot

    @property
    def total_ctus(self) -> int:
        return sum(g.n_ctu for g in self.grants)

    def grant(self, i: int) -> GrantConfig:
        """Grant i, 1-based."""
        if not 1 <= i <= self.n_cg:
            raise PreconditionError(f"grant index {i} outside [1, {self.n_cg}]")
        return self.grants[i - 1]

    def absolute_start(self, i: int) -> int:
        """Start slot of grant i counted from the beginning of the episode."""
        return self.n_slot * (self.subframe_index - 1) + self.grant(i).n_start


@dataclass(frozen=True)
class LatencyRecord:
    wait_slots: int
    rtt_slots: int
    total_slots: int
    total_ms: float


def rtt(grant: GrantConfig) -> int:
    """Round-trip time in slots: repetitions plus decode, feedback and processing."""
    return grant.n_repe + RTT_OVERHEAD_SLOTS


def _check_previous(schedule_t: SubframeSchedule, schedule_prev: Optional[SubframeSchedule]):
    if schedule_t.subframe_index > 1 and schedule_prev is None:
        raise PreconditionError(
            f"subframe {schedule_t.subframe_index} needs the schedule of subframe "
            f"{schedule_t.subframe_index - 1} to account the first grant"
        )


def grant_interval(
    schedule_t: SubframeSchedule, schedule_prev: Optional[SubframeSchedule], i: int
) -> Tuple[int, int]:
    """
    Packet interval (tau^{i-1}, tau^i] served by grant i, in absolute slots.

    For i = 1 and t > 1 the interval opens at the last grant of subframe t-1, whatever that
    subframe's grant count was.
    """
    schedule_t.grant(i)
    n_slot = schedule_t.n_slot
    base = n_slot * (schedule_t.subframe_index - 1)
    if i > 1:
        return base + schedule_t.grant(i - 1).n_start, base + schedule_t.grant(i).n_start
    if schedule_t.subframe_index == 1:
        return 0, 0
    _check_previous(schedule_t, schedule_prev)
    last = schedule_prev.grants[-1]
    return base - n_slot + last.n_start, base


def waiting_time(
    schedule_t: SubframeSchedule, schedule_prev: Optional[SubframeSchedule], i: int
) -> int:
    """Waiting time of grant i in slots: the length of its packet interval."""
    lo, hi = grant_interval(schedule_t, schedule_prev, i)
    return hi - lo


def latency(
    schedule_t: SubframeSchedule, schedule_prev: Optional[SubframeSchedule], i: int
) -> LatencyRecord:
    wait = waiting_time(schedule_t, schedule_prev, i)
    round_trip = rtt(schedule_t.grant(i))
    total = wait + round_trip
    return LatencyRecord(
        wait_slots=wait,
        rtt_slots=round_trip,
        total_slots=total,
        total_ms=total * schedule_t.numerology.tti_ms,
    )


def average_latency(
    per_grant_latency: Sequence[float], per_grant_successes: Sequence[int]
) -> Optional[float]:
    """
    Success-weighted mean latency of a subframe.

    Returns None when nothing was served: the mean is undefined and callers skip the subframe.
    """
    latencies = np.asarray(per_grant_latency, dtype=float)
    successes = np.asarray(per_grant_successes, dtype=float)
    if latencies.shape != successes.shape:
        raise ValueError(
            f"latency and success lists differ in length: {latencies.size} vs {successes.size}"
        )
    if np.any(successes < 0):
        raise ValueError("success counts must be non-negative")
    total = successes.sum()
    if total == 0:
        return None
    return float(np.dot(latencies, successes) / total)


@dataclass(frozen=True)
class Violation:
    constraint: str  # ctu-budget | latency | start-slot-order | start-slot-bound
    grant_indices: Tuple[int, ...]
    detail: str


@dataclass(frozen=True)
class ScheduleReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def describe(self) -> str:
        return "; ".join(f"{v.constraint} {list(v.grant_indices)}: {v.detail}" for v in self.violations)


def validate_schedule(schedule: SubframeSchedule, budget: int) -> ScheduleReport:
    """Check the CTU budget, latency and starting-slot constraints of one subframe."""
    violations: List[Violation] = []
    n_slot = schedule.n_slot

    if schedule.total_ctus != budget:
        violations.append(Violation(
            "ctu-budget",
            tuple(range(1, schedule.n_cg + 1)),
            f"grants configure {schedule.total_ctus} CTUs, budget is {budget}",
        ))

    for i, g in enumerate(schedule.grants, start=1):
        if g.n_start + g.n_repe + RTT_OVERHEAD_SLOTS != n_slot:
            violations.append(Violation(
                "latency", (i,),
                f"n_start + n_repe + 3 = {g.n_start + g.n_repe + RTT_OVERHEAD_SLOTS} != n_slot {n_slot}",
            ))
        if g.n_start >= n_slot - RTT_OVERHEAD_SLOTS:
            violations.append(Violation(
                "start-slot-bound", (i,),
                f"n_start={g.n_start} must be < {n_slot - RTT_OVERHEAD_SLOTS}",
            ))

    for i in range(1, schedule.n_cg):
        a, b = schedule.grants[i - 1], schedule.grants[i]
        if a.n_start >= b.n_start:
            violations.append(Violation(
                "start-slot-order", (i, i + 1),
                f"n_start {a.n_start} is not below the next grant's {b.n_start}",
            ))

    return ScheduleReport(tuple(violations))
