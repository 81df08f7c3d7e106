"""
Radio layer of GF-NOMA uplink: UE placement, path loss with Rayleigh fading, CTU selection and
classification, and power-domain SIC decoding per RB and repetition.

All power arithmetic is in linear mW; dBm/dB values are converted once in ChannelParams.
"""
import enum
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from mcgsim.errors import ConfigError
from mcgsim.frame import GrantConfig
from mcgsim.traffic import SeedLike

Ctu = Tuple[int, int]  # (rb, pilot)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    path_loss_exponent: float = 4.0
    tx_power_dbm: float = 23.0
    noise_power_dbm: float = -132.0
    sinr_threshold_db: float = -10.0
    cell_radius_m: float = 10000.0

    def __post_init__(self):
        if self.path_loss_exponent <= 2:
            raise ConfigError(f"path-loss exponent must exceed 2, got {self.path_loss_exponent}")
        if self.cell_radius_m <= 0:
            raise ConfigError(f"cell radius must be positive, got {self.cell_radius_m}")

    @property
    def tx_power_mw(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_power_dbm)

    @property
    def sinr_threshold(self) -> float:
        return db_to_linear(self.sinr_threshold_db)


class DecodeOutcome(enum.Enum):
    PENDING = "pending"
    SUCCESS = "success"
    COLLISION = "collision"
    SIC_FAILURE = "sic-failure"
    DROPPED = "dropped"


@dataclass(frozen=True, eq=False)
class UeTransmission:
    ue_id: int
    distance_m: float
    grant_index: int
    rb_index: int
    pilot_index: int
    fading: np.ndarray  # unit-mean exponential power gain, one per repetition
    outcome: DecodeOutcome = DecodeOutcome.PENDING
    decoded_repetition: Optional[int] = None  # 1-based, first repetition that decoded


@dataclass(frozen=True)
class CtuCensus:
    n_ctu: int
    idle: FrozenSet[Ctu]
    singleton: FrozenSet[Ctu]
    collision: FrozenSet[Ctu]
    singleton_ues_per_rb: Dict[int, Tuple[int, ...]]
    collision_ues_per_rb: Dict[int, int]

    @property
    def n_ic(self) -> int:
        return len(self.idle)

    @property
    def n_sc(self) -> int:
        return len(self.singleton)

    @property
    def n_cc(self) -> int:
        return len(self.collision)


@dataclass(frozen=True)
class GrantDecode:
    transmissions: Tuple[UeTransmission, ...]
    census: CtuCensus
    successes: FrozenSet[int]

    @property
    def n_suc(self) -> int:
        return len(self.successes)

    @property
    def n_singleton_ues(self) -> int:
        return self.census.n_sc

    @property
    def n_collided_ues(self) -> int:
        return sum(1 for tx in self.transmissions if tx.outcome is DecodeOutcome.COLLISION)

    @property
    def n_fdec(self) -> int:
        """Detected on a singleton CTU but never decoded."""
        return self.census.n_sc - self.n_suc


def place_ues(n: int, radius: float, rng_seed: SeedLike) -> np.ndarray:
    """Distances of n devices dropped uniformly over the cell disk (never exactly at the BS)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(rng_seed)
    u = 1.0 - rng.random(n)  # (0, 1]
    return radius * np.sqrt(u)


def received_power(params: ChannelParams, r, h):
    """Received power in mW: P h r^-eta. Accepts scalars or arrays."""
    r_arr = np.asarray(r, dtype=float)
    h_arr = np.asarray(h, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("distance must be positive")
    if np.any(h_arr <= 0):
        raise ValueError("fading gain must be positive")
    power = params.tx_power_mw * h_arr * r_arr ** (-params.path_loss_exponent)
    return float(power) if power.ndim == 0 else power


def select_ctus(
    ue_ids: Sequence[int],
    distances: np.ndarray,
    grant: GrantConfig,
    grant_index: int,
    rng_seed: SeedLike,
) -> Tuple[List[UeTransmission], CtuCensus]:
    """
    Every device picks one CTU of the grant uniformly at random and draws its fading for each
    repetition; the CTUs are then classified as idle, singleton or collision.
    """
    seq = np.random.SeedSequence(rng_seed) if not isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    pick_seq, fading_seq = seq.spawn(2)
    ue_ids = np.asarray(ue_ids, dtype=np.int64)
    picks = np.random.default_rng(pick_seq).integers(0, grant.n_ctu, size=ue_ids.size)
    fading = np.random.default_rng(fading_seq).exponential(1.0, size=(ue_ids.size, grant.n_repe))
    # exponential draws of exactly 0 are possible in principle; keep gains strictly positive
    fading = np.maximum(fading, np.finfo(float).tiny)

    occupancy = np.bincount(picks, minlength=grant.n_ctu)
    idle = frozenset(grant.ctu_of(c) for c in np.flatnonzero(occupancy == 0))
    singleton = frozenset(grant.ctu_of(c) for c in np.flatnonzero(occupancy == 1))
    collision = frozenset(grant.ctu_of(c) for c in np.flatnonzero(occupancy >= 2))

    singles: Dict[int, List[int]] = {f: [] for f in range(grant.rb_count)}
    collided: Dict[int, int] = {f: 0 for f in range(grant.rb_count)}
    transmissions: List[UeTransmission] = []
    for k, ue in enumerate(ue_ids):
        rb, pilot = grant.ctu_of(int(picks[k]))
        hit = occupancy[picks[k]] >= 2
        if hit:
            collided[rb] += 1
        else:
            singles[rb].append(int(ue))
        transmissions.append(UeTransmission(
            ue_id=int(ue),
            distance_m=float(distances[ue]),
            grant_index=grant_index,
            rb_index=rb,
            pilot_index=pilot,
            fading=fading[k],
            outcome=DecodeOutcome.COLLISION if hit else DecodeOutcome.PENDING,
        ))

    census = CtuCensus(
        n_ctu=grant.n_ctu,
        idle=idle,
        singleton=singleton,
        collision=collision,
        singleton_ues_per_rb={f: tuple(v) for f, v in singles.items()},
        collision_ues_per_rb=collided,
    )
    return transmissions, census


def sic_decode_repetition(
    singletons_on_rb: Sequence[UeTransmission],
    n_collision_ues_on_rb: int,
    collision_powers: Sequence[float],
    params: ChannelParams,
    repetition: int,
) -> Set[int]:
    """
    Strongest-first SIC over the singleton UEs of one (grant, RB) in repetition n (1-based).

    Collision-CTU UEs are never decoded and interfere at every stage. Decoding stops at the first
    stage whose SINR misses the threshold, so the decoded set is a prefix of the power order.
    """
    if len(collision_powers) != n_collision_ues_on_rb:
        raise ValueError(
            f"{n_collision_ues_on_rb} collision UEs but {len(collision_powers)} collision powers"
        )
    if not singletons_on_rb:
        return set()

    ids = np.array([tx.ue_id for tx in singletons_on_rb])
    powers = received_power(
        params,
        np.array([tx.distance_m for tx in singletons_on_rb]),
        np.array([tx.fading[repetition - 1] for tx in singletons_on_rb]),
    )
    powers = np.atleast_1d(powers)
    # descending power, ties by ue_id ascending
    order = np.lexsort((ids, -powers))
    powers, ids = powers[order], ids[order]

    # interference still present at stage s: every weaker singleton
    weaker = np.concatenate((np.cumsum(powers[::-1])[::-1][1:], [0.0]))
    floor = float(np.sum(collision_powers)) + params.noise_mw
    sinr = powers / (weaker + floor)
    passed = sinr >= params.sinr_threshold
    stop = len(passed) if passed.all() else int(np.argmin(passed))
    return {int(u) for u in ids[:stop]}


def decode_grant(
    transmissions: Sequence[UeTransmission],
    census: CtuCensus,
    params: ChannelParams,
    grant: GrantConfig,
) -> GrantDecode:
    """
    Decode every RB of one grant over all its repetitions. A singleton UE is served when at
    least one repetition decodes it; RBs are orthogonal and never interfere.
    """
    by_rb: Dict[int, List[UeTransmission]] = {f: [] for f in range(grant.rb_count)}
    collided_by_rb: Dict[int, List[UeTransmission]] = {f: [] for f in range(grant.rb_count)}
    for tx in transmissions:
        if tx.outcome is DecodeOutcome.COLLISION:
            collided_by_rb[tx.rb_index].append(tx)
        else:
            by_rb[tx.rb_index].append(tx)

    first_success: Dict[int, int] = {}
    for f in range(grant.rb_count):
        singles = by_rb[f]
        if not singles:
            continue
        colliders = collided_by_rb[f]
        for n in range(1, grant.n_repe + 1):
            coll_powers = [
                received_power(params, tx.distance_m, tx.fading[n - 1]) for tx in colliders
            ]
            for ue in sic_decode_repetition(singles, len(colliders), coll_powers, params, n):
                first_success.setdefault(ue, n)

    resolved = []
    for tx in transmissions:
        if tx.outcome is DecodeOutcome.COLLISION:
            resolved.append(tx)
        elif tx.ue_id in first_success:
            resolved.append(replace(tx, outcome=DecodeOutcome.SUCCESS,
                                    decoded_repetition=first_success[tx.ue_id]))
        else:
            resolved.append(replace(tx, outcome=DecodeOutcome.SIC_FAILURE))
    return GrantDecode(tuple(resolved), census, frozenset(first_success))
