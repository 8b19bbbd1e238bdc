"""The Poissonian field of independent lattice walks, simulated inside an explicit box.

Trajectories are kept on the time window ``[-past_depth, horizon]``; a field stores them
as an integer array of shape ``(particles, window length, d)``.
"""

import logging
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from rwrw_lab.bit_index import ConstraintFamily
from rwrw_lab.constants import DEFAULT_MAX_ATTEMPTS
from rwrw_lab.errors import ErrResource, ErrUsage
from rwrw_lab.kernels import JumpKernel, LatticeVector

SpaceTimePoint = Tuple[int, LatticeVector]


class EnvConfig:
    def __init__(self, d: int, density: float, env_kernel: JumpKernel, horizon: int, past_depth: int = 0) -> None:
        if d < 1:
            raise ErrUsage(f"dimension must be at least 1, got {d}")
        if not density >= 0:
            raise ErrUsage(f"density must be nonnegative, got {density}")
        if horizon < 1:
            raise ErrUsage(f"horizon must be at least 1, got {horizon}")
        if past_depth < 0:
            raise ErrUsage(f"past depth must be nonnegative, got {past_depth}")
        if env_kernel.d != d:
            raise ErrUsage(f"environment kernel lives in dimension {env_kernel.d}, not {d}")

        self.d = d
        self.density = float(density)
        self.env_kernel = env_kernel
        self.horizon = horizon
        self.past_depth = past_depth

    @property
    def start_time(self) -> int:
        return -self.past_depth

    @property
    def window_length(self) -> int:
        return self.past_depth + self.horizon + 1

    def with_density(self, density: float) -> 'EnvConfig':
        return EnvConfig(self.d, density, self.env_kernel, self.horizon, self.past_depth)

    def with_window(self, horizon: int, past_depth: Optional[int] = None) -> 'EnvConfig':
        return EnvConfig(self.d, self.density, self.env_kernel, horizon, self.past_depth if past_depth is None else past_depth)


class Box:
    """The sites ``x`` with ``|x - center|_inf <= radius``."""

    def __init__(self, d: int, radius: int, center: Optional[Sequence[int]] = None) -> None:
        if radius < 0:
            raise ErrUsage(f"box radius must be nonnegative, got {radius}")
        self.d = d
        self.radius = radius
        self.center = np.zeros(d, dtype=np.int64) if center is None else np.asarray(center, dtype=np.int64)

    @property
    def size(self) -> int:
        return (2 * self.radius + 1) ** self.d

    def sites(self) -> np.ndarray:
        axis = np.arange(-self.radius, self.radius + 1)
        grid = np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        return grid + self.center

    def contains(self, x: Sequence[int]) -> bool:
        return bool(np.max(np.abs(np.asarray(x) - self.center)) <= self.radius)


class PathObservation:
    """A backward walker path ``gamma`` with the occupancy bits ``sigma`` seen along it.

    ``positions[j]`` is the walker's site at time ``j - length``, so the last entry is
    ``gamma_{-1}``. Bit position ``i`` of a trace pattern refers to time ``-i``.
    """

    def __init__(self, positions: Sequence[Sequence[int]], sigma: Sequence[int], d: Optional[int] = None, name: str = "") -> None:
        positions_array = np.asarray(positions, dtype=np.int64)
        if positions_array.size == 0:
            if d is None:
                raise ErrUsage("an empty observation needs an explicit dimension")
            positions_array = np.zeros((0, d), dtype=np.int64)
        if positions_array.ndim != 2:
            raise ErrUsage("observation positions must be a (length, d) array")
        if len(sigma) != len(positions_array):
            raise ErrUsage(f"{len(positions_array)} positions but {len(sigma)} observation bits")
        if any(bit not in (0, 1) for bit in sigma):
            raise ErrUsage("observation bits must be 0 or 1")

        self.positions = positions_array
        self.sigma = tuple(int(bit) for bit in sigma)
        self.d = positions_array.shape[1]
        self.name = name

    @classmethod
    def empty(cls, d: int) -> 'PathObservation':
        return PathObservation(np.zeros((0, d), dtype=np.int64), (), d=d, name="empty")

    @classmethod
    def from_increments(cls, increments: Sequence[Sequence[int]], sigma: Sequence[int], name: str = "") -> 'PathObservation':
        """Chronological walker jumps ending at the origin at time 0."""
        increments_array = np.asarray(increments, dtype=np.int64)
        backward = -np.cumsum(increments_array[::-1], axis=0)
        return PathObservation(backward[::-1], sigma, d=increments_array.shape[1], name=name)

    @property
    def length(self) -> int:
        return len(self.sigma)

    def position_at(self, time: int) -> np.ndarray:
        if not -self.length <= time <= -1:
            raise ErrUsage(f"time {time} outside the observed window [-{self.length}, -1]")
        return self.positions[time + self.length]

    def bit_at(self, time: int) -> int:
        return self.sigma[time + self.length]

    def times(self) -> List[int]:
        return list(range(-self.length, 0))

    def occupied_positions(self) -> List[int]:
        """``O``: bit positions ``i`` (time ``-i``) observed occupied."""
        return [i for i in range(1, self.length + 1) if self.bit_at(-i) == 1]

    def vacant_positions(self) -> List[int]:
        return [i for i in range(1, self.length + 1) if self.bit_at(-i) == 0]

    def points(self) -> List[SpaceTimePoint]:
        return [(time, tuple(int(value) for value in self.position_at(time))) for time in self.times()]

    def constraints(self) -> ConstraintFamily:
        return ConstraintFamily(self.length, self.occupied_positions())

    def increments(self) -> np.ndarray:
        """Walker jumps at times ``-length .. -1``, the last one landing on the origin."""
        if self.length == 0:
            return np.zeros((0, self.d), dtype=np.int64)
        following = np.vstack([self.positions[1:], np.zeros((1, self.d), dtype=np.int64)])
        return following - self.positions

    def is_admissible(self, range_steps: Sequence[Sequence[int]]) -> bool:
        allowed = {tuple(int(value) for value in step) for step in range_steps}
        return all(tuple(int(value) for value in step) in allowed for step in self.increments())

    def max_norm(self) -> int:
        return int(np.abs(self.positions).max()) if self.length else 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "gamma": [[int(value) for value in position] for position in self.positions],
            "sigma": "".join(str(bit) for bit in self.sigma)
        }


class SiteCounts:
    def __init__(self, sites: np.ndarray, counts: np.ndarray, time: int = 0) -> None:
        self.sites = sites
        self.counts = counts
        self.time = time

    def as_mapping(self) -> Dict[LatticeVector, int]:
        return {tuple(int(value) for value in site): int(count) for site, count in zip(self.sites, self.counts)}

    def total(self) -> int:
        return int(self.counts.sum())


class ParticleField:
    def __init__(self, trajectories: np.ndarray, start_time: int) -> None:
        if trajectories.ndim != 3:
            raise ErrUsage("trajectories must be a (particles, window, d) array")
        self.trajectories = trajectories
        self.start_time = start_time

    @classmethod
    def empty(cls, d: int, start_time: int, end_time: int) -> 'ParticleField':
        return ParticleField(np.zeros((0, end_time - start_time + 1, d), dtype=np.int64), start_time)

    @property
    def size(self) -> int:
        return self.trajectories.shape[0]

    @property
    def d(self) -> int:
        return self.trajectories.shape[2]

    @property
    def end_time(self) -> int:
        return self.start_time + self.trajectories.shape[1] - 1

    def positions_at(self, time: int) -> np.ndarray:
        if not self.start_time <= time <= self.end_time:
            raise ErrUsage(f"time {time} outside the field window [{self.start_time}, {self.end_time}]")
        return self.trajectories[:, time - self.start_time, :]

    def count(self, x: Sequence[int], time: int) -> int:
        return int(np.all(self.positions_at(time) == np.asarray(x), axis=1).sum())

    def counts_at(self, sites: np.ndarray, time: int) -> np.ndarray:
        positions = self.positions_at(time)
        matches = np.all(positions[None, :, :] == sites[:, None, :], axis=2)
        return matches.sum(axis=1)

    def hitting_mask(self, points: Sequence[SpaceTimePoint]) -> np.ndarray:
        """Particles whose trajectory visits any of the space-time ``points``."""
        mask = np.zeros(self.size, dtype=bool)
        for time, site in points:
            if self.start_time <= time <= self.end_time:
                mask |= np.all(self.positions_at(time) == np.asarray(site), axis=1)
        return mask

    def without_hitting(self, points: Sequence[SpaceTimePoint]) -> 'ParticleField':
        return ParticleField(self.trajectories[~self.hitting_mask(points)], self.start_time)

    def concat(self, other: 'ParticleField') -> 'ParticleField':
        if other.start_time != self.start_time or other.trajectories.shape[1:] != self.trajectories.shape[1:]:
            raise ErrUsage("cannot merge fields over different windows")
        return ParticleField(np.concatenate([self.trajectories, other.trajectories]), self.start_time)

    def csv_rows(self, times: Optional[Sequence[int]] = None) -> Iterator[List[int]]:
        """Rows ``t, x1..xd, count`` over occupied sites, sorted by time then site."""
        for time in (times if times is not None else range(self.start_time, self.end_time + 1)):
            if self.size == 0:
                continue
            sites, counts = np.unique(self.positions_at(time), axis=0, return_counts=True)
            for site, count in zip(sites, counts):
                yield [time] + [int(value) for value in site] + [int(count)]


def safe_box_radius(config: EnvConfig, query_radius: int) -> int:
    """No particle started at time ``-past_depth`` outside this radius reaches a query inside ``query_radius``."""
    return config.env_kernel.range * (config.horizon + config.past_depth) + query_radius


def sample_initial_counts(config: EnvConfig, region: Box, rng: np.random.Generator) -> SiteCounts:
    sites = region.sites()
    return SiteCounts(sites, rng.poisson(config.density, size=len(sites)).astype(np.int64))


def evolve_field(counts: SiteCounts, env_kernel: JumpKernel, steps: int, rng: np.random.Generator) -> ParticleField:
    if steps < 0:
        raise ErrUsage(f"cannot evolve for {steps} steps")

    starts = np.repeat(counts.sites, counts.counts, axis=0)
    particles = len(starts)
    increments = env_kernel.sample(rng, particles * steps).reshape(particles, steps, env_kernel.d)
    paths = np.concatenate([starts[:, None, :], starts[:, None, :] + np.cumsum(increments, axis=1)], axis=1)
    return ParticleField(paths.astype(np.int64), counts.time)


def sample_field(config: EnvConfig, query_radius: int, rng: np.random.Generator) -> ParticleField:
    """Unconditioned field on ``[-past_depth, horizon]``, exact for queries within ``query_radius``."""
    region = Box(config.d, safe_box_radius(config, query_radius))
    counts = sample_initial_counts(config, region, rng)
    counts.time = config.start_time
    return evolve_field(counts, config.env_kernel, config.past_depth + config.horizon, rng)


def sample_avoiding_field(config: EnvConfig, history: PathObservation, query_radius: int, rng: np.random.Generator) -> ParticleField:
    """The field with every trajectory meeting a point of the observed path removed."""
    if history.length > config.past_depth:
        raise ErrUsage(f"history of length {history.length} exceeds the past depth {config.past_depth}")
    radius = max(query_radius, history.max_norm())
    return sample_field(config, radius, rng).without_hitting(history.points())


def observation_matches(field: ParticleField, history: PathObservation) -> bool:
    for (time, site), bit in zip(history.points(), history.sigma):
        if (field.count(site, time) > 0) != bool(bit):
            return False
    return True


def sample_conditioned_field_rejection(config: EnvConfig, history: PathObservation, query_radius: int,
                                       rng: np.random.Generator, max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> ParticleField:
    """Exact draw from the field conditioned on the observation, by resampling."""
    if history.length > config.past_depth:
        raise ErrUsage(f"history of length {history.length} exceeds the past depth {config.past_depth}")
    radius = max(query_radius, history.max_norm())

    for attempt in range(1, max_attempts + 1):
        field = sample_field(config, radius, rng)
        if observation_matches(field, history):
            logging.debug(f"Conditioned field accepted at attempt {attempt} (acceptance rate ~ {1 / attempt:.3g})")
            return field

    raise ErrResource(f"conditioned field rejection exhausted {max_attempts} attempts", acceptance_rate=0.0)
