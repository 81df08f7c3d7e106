"""
Action catalogs for the two cooperating agents.

The CTU agent picks how the CTU budget is split over the grants; the start agent picks the
grants' starting slots. Repetitions follow from the latency constraint, so these two factors
describe a whole subframe configuration. Action indices are positions in the lexicographic
enumeration and stay stable across runs.
"""
import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

from mcgsim.errors import ConfigError, FeasibilityError
from mcgsim.frame import RTT_OVERHEAD_SLOTS, FrameNumerology, GrantConfig, SubframeSchedule

Action = Tuple[int, ...]


def enumerate_ctu_actions(alphabet: Sequence[int], budget: int, n_cg: int) -> List[Action]:
    """Every n_cg-vector over the alphabet summing to the budget, in odometer order."""
    if not alphabet:
        raise ConfigError("CTU alphabet is empty")
    if n_cg < 1:
        raise ConfigError(f"n_cg must be >= 1, got {n_cg}")
    symbols = sorted(set(alphabet))
    return [v for v in itertools.product(symbols, repeat=n_cg) if sum(v) == budget]


def enumerate_start_actions(alphabet: Sequence[int], n_cg: int, n_slot: int) -> List[Action]:
    """Every strictly increasing n_cg-vector of starting slots, lexicographic."""
    last_start = n_slot - RTT_OVERHEAD_SLOTS - 1
    outside = [s for s in alphabet if not 0 <= s <= last_start]
    if outside:
        raise ConfigError(
            f"start slots {outside} fall outside [0, {last_start}] for a {n_slot}-slot subframe"
        )
    if n_cg < 1:
        raise ConfigError(f"n_cg must be >= 1, got {n_cg}")
    return list(itertools.combinations(sorted(set(alphabet)), n_cg))


def materialize_schedule(
    ctu_action: Sequence[int],
    start_action: Sequence[int],
    numerology: FrameNumerology,
    subframe_index: int,
    rb_count: int = 4,
) -> SubframeSchedule:
    """Turn a (CTU split, starting slots) pair into the grants of subframe t."""
    if len(ctu_action) != len(start_action):
        raise ValueError(
            f"CTU action has {len(ctu_action)} grants, start action {len(start_action)}"
        )
    grants = tuple(
        GrantConfig.for_subframe(n_ctu, n_start, numerology.n_slot, rb_count)
        for n_ctu, n_start in zip(ctu_action, start_action)
    )
    return SubframeSchedule(subframe_index, grants, numerology)


@dataclass(frozen=True)
class ActionCatalog:
    ctu_actions: Tuple[Action, ...]
    start_actions: Tuple[Action, ...]
    ctu_alphabet: Tuple[int, ...]
    start_alphabet: Tuple[int, ...]
    n_cg: int
    budget: int
    numerology: FrameNumerology
    rb_count: int = 4

    @classmethod
    def build(
        cls,
        ctu_alphabet: Sequence[int],
        start_alphabet: Sequence[int],
        n_cg: int,
        budget: int,
        numerology: FrameNumerology,
        rb_count: int = 4,
    ) -> "ActionCatalog":
        """Enumerate both catalogs; an empty one means the configuration is infeasible."""
        bad = [c for c in ctu_alphabet if c <= 0 or c % rb_count]
        if bad:
            raise ConfigError(f"CTU counts {bad} are not positive multiples of rb_count={rb_count}")
        ctu = enumerate_ctu_actions(ctu_alphabet, budget, n_cg)
        start = enumerate_start_actions(start_alphabet, n_cg, numerology.n_slot)
        if not ctu:
            raise FeasibilityError(
                f"no split of {budget} CTUs into {n_cg} grants uses only {sorted(ctu_alphabet)}"
            )
        if not start:
            raise FeasibilityError(
                f"cannot pick {n_cg} distinct starting slots from {sorted(start_alphabet)}"
            )
        return cls(
            ctu_actions=tuple(ctu),
            start_actions=tuple(start),
            ctu_alphabet=tuple(sorted(set(ctu_alphabet))),
            start_alphabet=tuple(sorted(set(start_alphabet))),
            n_cg=n_cg,
            budget=budget,
            numerology=numerology,
            rb_count=rb_count,
        )

    @property
    def n_slot(self) -> int:
        return self.numerology.n_slot

    @property
    def sizes(self) -> Tuple[int, int]:
        return len(self.ctu_actions), len(self.start_actions)

    def schedule(self, ctu_index: int, start_index: int, subframe_index: int) -> SubframeSchedule:
        return materialize_schedule(
            self.ctu_actions[ctu_index],
            self.start_actions[start_index],
            self.numerology,
            subframe_index,
            self.rb_count,
        )

    def fingerprint(self) -> str:
        """Digest of both catalogs; checkpoints refuse to load against a different one."""
        payload = json.dumps(
            {"ctu": self.ctu_actions, "start": self.start_actions, "n_slot": self.n_slot,
             "rb_count": self.rb_count},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def iter_records(self) -> Iterator[dict]:
        """One record per action, CTU catalog first."""
        for index, action in enumerate(self.ctu_actions):
            yield {"agent": "ctu", "index": index, "action": list(action)}
        for index, action in enumerate(self.start_actions):
            yield {"agent": "start", "index": index, "action": list(action)}
