"""Multi-cell downlink environment for base-station power control.

Every base station serves its users on ``rb_per_bs`` resource blocks that
are shared (co-indexed) across cells, so a user on RB ``k`` sees
interference from every other base station transmitting on RB ``k``.
Transmit power is split equally over the RBs and RBs are handed out by a
proportional-fair rule.  A power level is judged by the reward
``P_target - P_b - beta * [average rate < C_min]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

DISCRETE = "discrete"
CONTINUOUS = "continuous"
STATE_MODES = (DISCRETE, CONTINUOUS)

# Keeps the proportional-fair ratio finite before a user has been served.
PF_EPS = 1.0

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class ConfigurationError(ValueError):
    """Invalid configuration value or flag."""


class DomainError(ValueError):
    """Argument outside the domain of an environment operation."""


@dataclass(frozen=True)
class NetworkConfig:
    """Static network parameters shared by every episode.

    Powers are in W, rates in bit/s, bandwidth in Hz and distances in m.
    ``extra_loss_db`` is a fixed link-budget loss added to every link
    (penetration, clutter, antenna and implementation losses).  Without it
    a 20 m cell is so strongly interference limited that the shared power
    level has no effect on SINR.
    """

    num_bs: int = 3
    rb_per_bs: int = 25
    rb_bandwidth: float = 180e3
    noise_density: float = 10 ** (-174 / 10) / 1000
    max_power: float = 4.0
    min_rate: float = 7.35e5
    coverage_radius: float = 20.0
    user_count_range: tuple[int, int] = (5, 15)
    carrier_freq: float = 2.6
    target_power: float = 5.0
    penalty: float = 5.0
    num_levels: int = 4
    extra_loss_db: float = 75.0
    inter_site_distance: float = 40.0
    shadowing_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "user_count_range", tuple(int(v) for v in self.user_count_range))
        lo, hi = self.user_count_range
        checks = [
            (self.num_bs >= 1, "num_bs must be >= 1"),
            (self.rb_per_bs >= 1, "rb_per_bs must be >= 1"),
            (self.rb_bandwidth > 0, "rb_bandwidth must be > 0"),
            (self.noise_density > 0, "noise_density must be > 0"),
            (self.max_power > 0, "max_power must be > 0"),
            (self.min_rate >= 0, "min_rate must be >= 0"),
            (self.coverage_radius > 0, "coverage_radius must be > 0"),
            (1 <= lo <= hi, "user_count_range must satisfy 1 <= min <= max"),
            (self.carrier_freq > 0, "carrier_freq must be > 0"),
            (self.num_levels >= 2, "num_levels must be >= 2"),
            (self.penalty >= 0, "penalty must be >= 0"),
            (self.inter_site_distance > 0, "inter_site_distance must be > 0"),
            (self.shadowing_std >= 0, "shadowing_std must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["user_count_range"] = list(self.user_count_range)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown network keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class NetworkState:
    """One episode's user layout.

    Users are stored flat: user ``i`` belongs to base station
    ``user_bs[i]`` and sits ``user_distance[i]`` metres from it at bearing
    ``user_angle[i]``.  ``shadowing_db[i, b]`` is the shadowing on the link
    from base station ``b`` to user ``i``.
    """

    mode: str
    user_counts: tuple[int, ...]
    avg_distances: tuple[float, ...]
    user_bs: np.ndarray
    user_distance: np.ndarray
    user_angle: np.ndarray
    shadowing_db: np.ndarray

    @property
    def num_users(self) -> int:
        return int(self.user_bs.size)

    @property
    def user_positions(self) -> list[tuple[int, float]]:
        return [(int(b), float(d)) for b, d in zip(self.user_bs, self.user_distance)]

    def decision_state(self, bs: int | None = None) -> float:
        """Scalar state the decision maker conditions on.

        For a shared decision the discrete state is the user count of the
        most loaded base station (it decides which level is feasible for the
        whole network) and the continuous state is the mean of the per-BS
        average user distances.  With ``bs`` given, that base station's own
        count or average distance is returned.
        """
        if self.mode == DISCRETE:
            return int(max(self.user_counts) if bs is None else self.user_counts[bs])
        if bs is None:
            return float(np.mean(self.avg_distances))
        return float(self.avg_distances[bs])


@dataclass(frozen=True, eq=False)
class StepOutcome:
    levels: tuple[int, ...]
    user_rate: np.ndarray
    avg_rate: np.ndarray
    power: np.ndarray
    constraint_ok: np.ndarray
    reward: np.ndarray
    system_reward: float

    @property
    def all_ok(self) -> bool:
        return bool(np.all(self.constraint_ok))

    @property
    def mean_power(self) -> float:
        return float(np.mean(self.power))

    @property
    def total_power(self) -> float:
        return float(np.sum(self.power))


def bs_positions(config: NetworkConfig) -> np.ndarray:
    """Base stations on a regular polygon, neighbours ``inter_site_distance`` apart."""
    n = config.num_bs
    if n == 1:
        return np.zeros((1, 2))
    radius = config.inter_site_distance / (2.0 * math.sin(math.pi / n))
    phi = 2.0 * math.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(phi), np.sin(phi)])


def _bs_bearing(config: NetworkConfig, b: int) -> float:
    return 2.0 * math.pi * b / config.num_bs


def sample_state(config: NetworkConfig, mode: str, rng_seed: int) -> NetworkState:
    """Draw the per-episode user layout.

    Both modes draw each base station's user count uniformly from
    ``user_count_range``.  In discrete mode the state is the count alone,
    so users sit on a fixed spiral with evenly spaced distances; in
    continuous mode distances are uniform on (0, coverage_radius] and
    bearings uniform on [0, 2*pi).
    """
    if mode not in STATE_MODES:
        raise ConfigurationError(f"unknown state mode {mode!r}; expected one of {STATE_MODES}")
    rng = np.random.default_rng(rng_seed)
    lo, hi = config.user_count_range
    counts = rng.integers(lo, hi + 1, size=config.num_bs)
    radius = config.coverage_radius

    bs_idx, dist, angle = [], [], []
    for b, n in enumerate(counts):
        n = int(n)
        if mode == DISCRETE:
            i = np.arange(n)
            d = radius * (i + 0.5) / n
            a = np.mod(_bs_bearing(config, b) + _GOLDEN_ANGLE * i, 2.0 * math.pi)
        else:
            d = radius * (1.0 - rng.random(n))
            a = rng.uniform(0.0, 2.0 * math.pi, n)
        bs_idx.append(np.full(n, b))
        dist.append(d)
        angle.append(a)

    user_bs = np.concatenate(bs_idx)
    user_distance = np.concatenate(dist)
    if config.shadowing_std > 0:
        shadowing = rng.normal(0.0, config.shadowing_std, size=(user_bs.size, config.num_bs))
    else:
        shadowing = np.zeros((user_bs.size, config.num_bs))
    return NetworkState(
        mode=mode,
        user_counts=tuple(int(c) for c in counts),
        avg_distances=tuple(float(np.mean(d)) for d in dist),
        user_bs=user_bs,
        user_distance=user_distance,
        user_angle=np.concatenate(angle),
        shadowing_db=shadowing,
    )


def path_loss_db(distance, config: NetworkConfig, shadowing_db=0.0):
    return (
        32.4
        + 21.0 * np.log10(distance)
        + 20.0 * math.log10(config.carrier_freq)
        + shadowing_db
    )


def channel_gain(distance, config: NetworkConfig, shadowing_db=0.0):
    """Linear gain of a UMi-style path loss with carrier in GHz and distance in m."""
    if np.any(np.asarray(distance) <= 0):
        raise DomainError("distance must be > 0")
    return 10.0 ** (-path_loss_db(distance, config, shadowing_db) / 10.0)


def user_xy(state: NetworkState, config: NetworkConfig) -> np.ndarray:
    origin = bs_positions(config)[state.user_bs]
    return origin + state.user_distance[:, None] * np.column_stack(
        [np.cos(state.user_angle), np.sin(state.user_angle)]
    )


def link_gains(state: NetworkState, config: NetworkConfig) -> np.ndarray:
    """Gain matrix ``G[i, b]`` from base station ``b`` to user ``i``."""
    diff = user_xy(state, config)[:, None, :] - bs_positions(config)[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    # own-cell distances are taken from the state to avoid round-off
    dist[np.arange(state.num_users), state.user_bs] = state.user_distance
    return channel_gain(dist, config, state.shadowing_db) * 10.0 ** (-config.extra_loss_db / 10.0)


def level_to_watts(level: int, config: NetworkConfig) -> float:
    if isinstance(level, bool) or int(level) != level or not 1 <= level <= config.num_levels:
        raise DomainError(f"power level {level!r} outside 1..{config.num_levels}")
    return int(level) * (config.max_power / config.num_levels)


def sinr(gains: np.ndarray, user_bs: np.ndarray, rb_power: np.ndarray,
         config: NetworkConfig, interference: bool = True) -> np.ndarray:
    """Per-user SINR on any RB, given per-BS power per RB.

    No fast fading, so the SINR of a user does not depend on the RB index.
    """
    rx = gains * rb_power[None, :]
    own = rx[np.arange(user_bs.size), user_bs]
    noise = config.rb_bandwidth * config.noise_density
    if not interference:
        return own / noise
    return own / (rx.sum(axis=1) - own + noise)


def allocate_rbs(state: NetworkState, config: NetworkConfig) -> np.ndarray:
    """Proportional-fair RB allocation, returned as ``alloc[b, k] = user index``.

    The instantaneous rate used for scheduling assumes every base station
    transmits at ``max_power``, so the allocation is independent of the
    chosen power levels.
    """
    if min(state.user_counts) < 1:
        raise DomainError("every base station needs at least one user")
    ref_power = np.full(config.num_bs, config.max_power / config.rb_per_bs)
    inst = config.rb_bandwidth * np.log2(
        1.0 + sinr(link_gains(state, config), state.user_bs, ref_power, config)
    )
    alloc = np.empty((config.num_bs, config.rb_per_bs), dtype=int)
    for b in range(config.num_bs):
        users = np.flatnonzero(state.user_bs == b)
        served = np.zeros(users.size)
        for k in range(config.rb_per_bs):
            avg = served / k if k else served
            j = int(np.argmax(inst[users] / (PF_EPS + avg)))
            alloc[b, k] = users[j]
            served[j] += inst[users[j]]
    return alloc


def allocation_matrix(alloc: np.ndarray, num_users: int) -> np.ndarray:
    """Indicator ``gamma[b, k, u]`` for an allocation from :func:`allocate_rbs`."""
    gamma = np.zeros(alloc.shape + (num_users,), dtype=int)
    b, k = np.indices(alloc.shape)
    gamma[b, k, alloc] = 1
    return gamma


def user_rates(state: NetworkState, powers, config: NetworkConfig,
               alloc: np.ndarray | None = None, interference: bool = True) -> np.ndarray:
    """Achievable rate of every user for total per-BS powers ``powers`` (W)."""
    powers = np.asarray(powers, dtype=float)
    if alloc is None:
        alloc = allocate_rbs(state, config)
    rb_count = np.bincount(alloc.ravel(), minlength=state.num_users)
    s = sinr(link_gains(state, config), state.user_bs, powers / config.rb_per_bs,
             config, interference=interference)
    return rb_count * config.rb_bandwidth * np.log2(1.0 + s)


def _as_levels(levels, config: NetworkConfig) -> tuple[int, ...]:
    if np.ndim(levels) == 0:
        levels = [levels] * config.num_bs
    levels = tuple(levels)
    if len(levels) != config.num_bs:
        raise DomainError(f"expected {config.num_bs} levels, got {len(levels)}")
    for level in levels:
        level_to_watts(level, config)
    return tuple(int(v) for v in levels)


def step(state: NetworkState, levels, config: NetworkConfig,
         alloc: np.ndarray | None = None) -> StepOutcome:
    """Apply power levels (one per BS, or a single shared level) for one episode.

    ``system_reward`` is the mean of the per-BS rewards.
    """
    levels = _as_levels(levels, config)
    power = np.array([level_to_watts(v, config) for v in levels])
    rates = user_rates(state, power, config, alloc=alloc)
    avg_rate = np.bincount(state.user_bs, weights=rates, minlength=config.num_bs) / np.array(state.user_counts)
    ok = avg_rate >= config.min_rate
    reward = config.target_power - power - np.where(ok, 0.0, config.penalty)
    return StepOutcome(
        levels=levels,
        user_rate=rates,
        avg_rate=avg_rate,
        power=power,
        constraint_ok=ok,
        reward=reward,
        system_reward=float(np.mean(reward)),
    )
