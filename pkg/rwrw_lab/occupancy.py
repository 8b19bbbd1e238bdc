"""Occupancy queries ``N(x, t)`` against an explicit field or the lazy on-path engine.

The lazy engine answers queries issued at strictly increasing times. At a query point it
draws ``K ~ Poi(lambda)`` candidate trajectories pinned there (backward increments from the
reversed kernel, forward increments from the kernel) and keeps those that meet neither a
previously queried point nor a point of the observed history. Candidates meeting a logged
point are particles revealed earlier; candidates meeting the history are the anchored
particles, which are loaded up front.
"""

import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from rwrw_lab.constants import DEFAULT_MAX_ATTEMPTS
from rwrw_lab.environment import (EnvConfig, ParticleField, PathObservation,
                                  safe_box_radius)
from rwrw_lab.errors import ErrResource, ErrUsage
from rwrw_lab.kernels import JumpKernel

Engine = Literal["explicit", "lazy"]


class LazyStepRecord:
    def __init__(self, t: int, site: Tuple[int, ...], candidates: int, q: int, r: int, s: int, previously_revealed: int, anchored: int) -> None:
        self.t = t
        self.site = site
        self.candidates = candidates
        self.q = q
        self.r = r
        self.s = s
        self.previously_revealed = previously_revealed
        self.anchored = anchored

    @property
    def survivors(self) -> int:
        return self.q + self.r

    @property
    def newly_revealed(self) -> int:
        return self.q + self.r + self.s

    @property
    def count(self) -> int:
        return self.q + self.r + self.previously_revealed + self.anchored

    @property
    def path_independent_count(self) -> int:
        """The part of the count that does not involve anchored particles."""
        return self.q + self.r + self.previously_revealed

    def to_dict(self):
        return {
            "t": self.t,
            "site": list(self.site),
            "candidates": self.candidates,
            "q": self.q,
            "r": self.r,
            "s": self.s,
            "count": self.count
        }


class OccupancyOracle:
    def __init__(self, config: EnvConfig, engine: Engine, rng: Optional[np.random.Generator] = None,
                 field: Optional[ParticleField] = None, query_radius: int = 0,
                 history: Optional[PathObservation] = None, anchored: Optional[np.ndarray] = None) -> None:
        if engine not in ("explicit", "lazy"):
            raise ErrUsage(f"unknown occupancy engine [{engine}]")
        if engine == "explicit" and field is None:
            raise ErrUsage("the explicit engine needs a field")
        if engine == "lazy" and rng is None:
            raise ErrUsage("the lazy engine needs its own random generator")

        self.config = config
        self.engine = engine
        self.rng = rng
        self.field = field
        self.query_radius = query_radius
        self.history = history if history is not None else PathObservation.empty(config.d)
        if self.history.length > config.past_depth:
            raise ErrUsage(f"history of length {self.history.length} exceeds the past depth {config.past_depth}")

        window = config.window_length
        self.revealed = np.zeros((0, window, config.d), dtype=np.int64)
        self.anchored = anchored if anchored is not None else np.zeros((0, window, config.d), dtype=np.int64)
        if self.anchored.shape[1:] != (window, config.d):
            raise ErrUsage(f"anchored trajectories must span the window of length {window}")
        self.anchored_seen = np.zeros(len(self.anchored), dtype=bool)

        self.query_times: List[int] = []
        self.query_sites: List[np.ndarray] = []
        self.records: List[LazyStepRecord] = []

        points = self.history.points()
        self._avoid_times = np.array([time for time, _ in points], dtype=np.int64)
        self._avoid_sites = np.array([site for _, site in points], dtype=np.int64).reshape(-1, config.d)
        self._reversed_kernel = config.env_kernel.reversed()

    @classmethod
    def explicit(cls, config: EnvConfig, field: ParticleField, query_radius: int) -> 'OccupancyOracle':
        return OccupancyOracle(config, "explicit", field=field, query_radius=query_radius)

    @classmethod
    def lazy(cls, config: EnvConfig, rng: np.random.Generator, history: Optional[PathObservation] = None,
             anchored: Optional[np.ndarray] = None) -> 'OccupancyOracle':
        return OccupancyOracle(config, "lazy", rng=rng, history=history, anchored=anchored)

    @property
    def last_query_time(self) -> Optional[int]:
        return self.query_times[-1] if self.query_times else None

    def query(self, x: Sequence[int], t: int) -> Tuple[int, int]:
        return occupancy(self, x, t)

    def candidates(self, x: np.ndarray, t: int, count: int, rng: np.random.Generator) -> np.ndarray:
        return pinned_trajectories(self.config, x, t, count, rng, self._reversed_kernel)

    def surviving(self, trajectories: np.ndarray) -> np.ndarray:
        """Mask of candidates that avoid every logged query point and every history point."""
        start = self.config.start_time
        keep = np.ones(len(trajectories), dtype=bool)
        if len(trajectories) == 0:
            return keep

        if self.query_times:
            times = np.asarray(self.query_times) - start
            sites = np.asarray(self.query_sites)
            hits = np.all(trajectories[:, times, :] == sites[None, :, :], axis=2)
            keep &= ~np.any(hits, axis=1)
        if len(self._avoid_times):
            hits = np.all(trajectories[:, self._avoid_times - start, :] == self._avoid_sites[None, :, :], axis=2)
            keep &= ~np.any(hits, axis=1)
        return keep


def pinned_trajectories(config: EnvConfig, x: np.ndarray, t: int, count: int, rng: np.random.Generator,
                        reversed_kernel: Optional[JumpKernel] = None) -> np.ndarray:
    """Trajectories on ``[-past_depth, horizon]`` that sit at ``x`` at time ``t``."""
    kernel = config.env_kernel
    reversed_kernel = reversed_kernel or kernel.reversed()
    d = config.d
    back_steps = t - config.start_time
    forward_steps = config.horizon - t
    x = np.asarray(x, dtype=np.int64)

    backward = x + np.cumsum(reversed_kernel.sample(rng, count * back_steps).reshape(count, back_steps, d), axis=1)
    forward = x + np.cumsum(kernel.sample(rng, count * forward_steps).reshape(count, forward_steps, d), axis=1)
    here = np.broadcast_to(x, (count, 1, d))
    return np.concatenate([backward[:, ::-1, :], here, forward], axis=1).astype(np.int64)


def occupancy(oracle: OccupancyOracle, x: Sequence[int], t: int) -> Tuple[int, int]:
    """``(1{N(x,t) >= 1}, N(x,t))``."""
    if oracle.engine == "explicit":
        if oracle.field is None:
            raise ErrUsage("explicit oracle without a field")
        if np.max(np.abs(np.asarray(x))) > oracle.query_radius:
            raise ErrUsage(f"query {tuple(x)} lies outside the safe query radius {oracle.query_radius}")
        if not oracle.config.start_time <= t <= oracle.config.horizon:
            raise ErrUsage(f"query time {t} outside [{oracle.config.start_time}, {oracle.config.horizon}]")
        count = oracle.field.count(x, t)
        return int(count > 0), count

    assert oracle.rng is not None
    record = lazy_reveal_step(oracle, x, t, oracle.rng)
    return int(record.count > 0), record.count


def lazy_reveal_step(oracle: OccupancyOracle, x: Sequence[int], t: int, rng: np.random.Generator,
                     q_fraction: float = 0.0, forced_q: Optional[int] = None,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> LazyStepRecord:
    """Reveal the particles at ``(x, t)``.

    New survivors are marked as the path-independent part ``Q`` independently with
    probability ``q_fraction``; the rest form ``R``. With ``forced_q`` the ``Q`` part is
    replaced by exactly that many survivors drawn by rejection.
    """
    if oracle.engine != "lazy":
        raise ErrUsage("lazy reveal on an explicit oracle")
    config = oracle.config
    if oracle.last_query_time is not None and t <= oracle.last_query_time:
        raise ErrUsage(f"lazy queries must move forward in time: {t} after {oracle.last_query_time}")
    if not config.start_time <= t <= config.horizon:
        raise ErrUsage(f"query time {t} outside [{config.start_time}, {config.horizon}]")
    if not 0 <= q_fraction <= 1:
        raise ErrUsage(f"thinning fraction {q_fraction} outside [0, 1]")

    site = np.asarray(x, dtype=np.int64)
    index = t - config.start_time

    candidate_count = int(rng.poisson(config.density))
    candidates = oracle.candidates(site, t, candidate_count, rng)
    survivors = candidates[oracle.surviving(candidates)]
    marked_q = rng.uniform(size=len(survivors)) < q_fraction

    if forced_q is None:
        new = survivors
        q = int(marked_q.sum())
    else:
        new = np.concatenate([survivors[~marked_q], _forced_survivors(oracle, site, t, forced_q, rng, max_attempts)])
        q = forced_q
    r = len(new) - q

    previously_revealed = int(np.all(oracle.revealed[:, index, :] == site, axis=1).sum())
    at_site = np.all(oracle.anchored[:, index, :] == site, axis=1)
    first_seen = at_site & ~oracle.anchored_seen
    oracle.anchored_seen |= at_site

    oracle.query_times.append(t)
    oracle.query_sites.append(site)
    oracle.revealed = np.concatenate([oracle.revealed, new])

    record = LazyStepRecord(t, tuple(int(value) for value in site), candidate_count, q, r, int(first_seen.sum()), previously_revealed, int(at_site.sum()))
    oracle.records.append(record)
    return record


def _forced_survivors(oracle: OccupancyOracle, site: np.ndarray, t: int, count: int,
                      rng: np.random.Generator, max_attempts: int) -> np.ndarray:
    config = oracle.config
    found: List[np.ndarray] = []
    have = 0
    attempts = 0

    while have < count:
        if attempts >= max_attempts:
            raise ErrResource(f"no surviving candidate at {tuple(site)}, t = {t} after {attempts} draws", acceptance_rate=have / max(1, attempts))
        batch = min(max_attempts - attempts, max(16, 4 * (count - have)))
        candidates = oracle.candidates(site, t, batch, rng)
        attempts += batch
        keep = candidates[oracle.surviving(candidates)]
        found.append(keep)
        have += len(keep)

    if attempts > 8 * count:
        logging.debug(f"Forced survivors at t = {t}: acceptance rate {count / attempts:.3g}")
    return np.concatenate(found)[:count] if found else np.zeros((0, config.window_length, config.d), dtype=np.int64)


def explicit_oracle(config: EnvConfig, field: ParticleField, query_radius: int) -> OccupancyOracle:
    """Oracle over a field that must have been sampled on the safe box for ``query_radius``."""
    logging.debug(f"Explicit oracle: query radius {query_radius}, safe box radius {safe_box_radius(config, query_radius)}, {field.size} particles")
    return OccupancyOracle.explicit(config, field, query_radius)
