"""From an observed history to a constrained Poisson problem, and back to trajectories.

A trajectory's trace pattern over a history of length ``L`` is the bit index whose
position ``i`` says whether the trajectory sits on ``gamma_{-i}`` at time ``-i``. Trace
patterns of the particles meeting the history are independent Poisson counts; the
observation asks for at least one particle on every occupied point and none on a vacant
one. Decomposing that problem and lifting each pattern back to a pinned walk yields the
anchored particles, which together with the history-avoiding field give the field
conditioned on the observation.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from rwrw_lab.bit_index import (RateTable, code_to_bits, format_bits,
                                format_instance)
from rwrw_lab.constants import (DEFAULT_MAX_ATTEMPTS, PINNED_WALK_BATCH, Z_95)
from rwrw_lab.decomposition import DecompositionPlan, decompose
from rwrw_lab.environment import (EnvConfig, ParticleField, PathObservation,
                                  SpaceTimePoint, sample_avoiding_field)
from rwrw_lab.errors import ErrInvariant, ErrResource, ErrUsage
from rwrw_lab.kernels import JumpKernel
from rwrw_lab.occupancy import LazyStepRecord, pinned_trajectories


class RateEstimate:
    def __init__(self, value: float, ci: float, samples: int) -> None:
        self.value = value
        self.ci = ci
        self.samples = samples

    @classmethod
    def from_successes(cls, density: float, successes: int, samples: int) -> 'RateEstimate':
        p = successes / samples
        return RateEstimate(density * p, Z_95 * density * np.sqrt(p * (1 - p) / samples), samples)

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "ci": self.ci, "samples": self.samples}

    def __repr__(self) -> str:
        return f"RateEstimate({self.value:.6g} +- {self.ci:.2g}, n={self.samples})"


def trace_codes(trajectories: np.ndarray, history: PathObservation, start_time: int) -> np.ndarray:
    """Integer-encoded trace patterns; position ``i`` (time ``-i``) is bit ``L - i`` of the code."""
    length = history.length
    codes = np.zeros(len(trajectories), dtype=np.int64)
    for i in range(1, length + 1):
        on_path = np.all(trajectories[:, -i - start_time, :] == history.position_at(-i), axis=1)
        codes |= on_path.astype(np.int64) << (length - i)
    return codes


def most_recent_hit(code: int, length: int) -> int:
    """Smallest position ``i`` (latest time ``-i``) set in the pattern."""
    if code <= 0:
        raise ErrUsage("the empty pattern has no hit")
    return length - int(code).bit_length() + 1


def vacant_mask(history: PathObservation) -> int:
    mask = 0
    for i in history.vacant_positions():
        mask |= 1 << (history.length - i)
    return mask


class BridgedRates:
    def __init__(self, history: PathObservation, table: RateTable, ci: np.ndarray, samples: int) -> None:
        self.history = history
        self.table = table
        self.constraints = history.constraints()
        self.ci = ci
        self.samples = samples

    def perturbed(self, sign: int) -> RateTable:
        """Rates moved to the lower (``sign = -1``) or upper (``+1``) CI endpoints; zeros stay zero."""
        if sign not in (-1, 1):
            raise ErrUsage("perturbation sign must be -1 or +1")
        rates = np.where(self.table.rates > 0, np.clip(self.table.rates + sign * self.ci, 0.0, None), 0.0)
        return RateTable(self.table.n, rates)

    def format(self) -> str:
        return format_instance(self.table, self.constraints)


def rates_from_history(history: PathObservation, config: EnvConfig, mc_samples: int, rng: np.random.Generator) -> BridgedRates:
    """Monte Carlo trace-pattern rates ``lambda P(X in x | X_{-k} = gamma_{-k})``.

    Each pattern is estimated from the walks pinned at its most recent hit ``k``. Patterns
    meeting a vacant point, and the empty pattern, get rate zero.
    """
    length = history.length
    if length == 0:
        raise ErrUsage("rates need a nonempty history")
    if length > config.past_depth:
        raise ErrUsage(f"history of length {length} exceeds the past depth {config.past_depth}")
    if mc_samples < 1:
        raise ErrUsage("need at least one Monte Carlo sample")

    size = 1 << length
    rates = np.zeros(size)
    ci = np.zeros(size)
    forbidden = vacant_mask(history)
    codes_all = np.arange(size)

    for k in history.occupied_positions():
        walks = pinned_trajectories(config, history.position_at(-k), -k, mc_samples, rng)
        codes = trace_codes(walks, history, config.start_time)
        frequencies = np.bincount(codes, minlength=size) / mc_samples
        # Patterns whose most recent hit is k: bit k set, bits 1..k-1 clear.
        owned = (codes_all >> (length - k)) == 1
        owned &= (codes_all & forbidden) == 0
        rates[owned] = config.density * frequencies[owned]
        ci[owned] = Z_95 * config.density * np.sqrt(frequencies[owned] * (1 - frequencies[owned]) / mc_samples)

    logging.debug(f"Bridged rates for {history.name or 'history'}: total {rates.sum():.4g} over {np.count_nonzero(rates)} patterns")
    return BridgedRates(history, RateTable(length, rates), ci, mc_samples)


def cross_anchor_consistency(history: PathObservation, config: EnvConfig, mc_samples: int, rng: np.random.Generator) -> float:
    """Largest z-score between estimates of one pattern rate pinned at two of its hits."""
    length = history.length
    size = 1 << length
    estimates: Dict[int, np.ndarray] = dict()

    for k in range(1, length + 1):
        walks = pinned_trajectories(config, history.position_at(-k), -k, mc_samples, rng)
        estimates[k] = np.bincount(trace_codes(walks, history, config.start_time), minlength=size) / mc_samples

    worst = 0.0
    for code in range(1, size):
        hits = [k for k in range(1, length + 1) if (code >> (length - k)) & 1]
        for first, second in zip(hits, hits[1:]):
            p, q = estimates[first][code], estimates[second][code]
            spread = np.sqrt((p * (1 - p) + q * (1 - q)) / mc_samples)
            if spread > 0:
                worst = max(worst, abs(p - q) / spread)
    return float(worst)


class AnchoredParticles:
    def __init__(self, trajectories: np.ndarray, anchor_times: np.ndarray, patterns: np.ndarray, length: int) -> None:
        self.trajectories = trajectories
        self.anchor_times = anchor_times
        self.patterns = patterns
        self.length = length

    @property
    def count(self) -> int:
        return len(self.trajectories)

    def format(self) -> str:
        lines = [f"bits={format_bits(code_to_bits(int(code), self.length))} anchor={int(time)}" for code, time in zip(self.patterns, self.anchor_times)]
        return "\n".join(lines) + ("\n" if lines else "")


class AnchoredSampler:
    """Draws the particles of the conditioned field that meet the observed history."""

    def __init__(self, history: PathObservation, config: EnvConfig, rates: BridgedRates,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> None:
        self.history = history
        self.config = config
        self.rates = rates
        self.max_attempts = max_attempts
        self.plan = DecompositionPlan(rates.table, rates.constraints) if history.occupied_positions() else None
        self.acceptance: Dict[int, Tuple[int, int]] = dict()

    def empty(self) -> AnchoredParticles:
        window = self.config.window_length
        return AnchoredParticles(np.zeros((0, window, self.config.d), dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), self.history.length)

    def sample(self, rng: np.random.Generator) -> AnchoredParticles:
        if self.plan is None or self.config.density == 0:
            return self.empty()

        counts = decompose(self.rates.table, self.rates.constraints, rng, "exact-conditional", self.plan).counts
        trajectories: List[np.ndarray] = []
        anchor_times: List[int] = []
        patterns: List[int] = []

        for code in np.flatnonzero(counts):
            code = int(code)
            k = most_recent_hit(code, self.history.length)
            walks = self.pinned_with_pattern(code, k, int(counts[code]), rng)
            trajectories.append(walks)
            anchor_times.extend([-k] * len(walks))
            patterns.extend([code] * len(walks))

        if not trajectories:
            raise ErrInvariant("a conditioned decomposition produced no anchored particle")
        return AnchoredParticles(np.concatenate(trajectories), np.asarray(anchor_times), np.asarray(patterns), self.history.length)

    def pinned_with_pattern(self, code: int, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """Walks pinned at ``(gamma_{-k}, -k)`` conditioned on the trace pattern ``code``."""
        found: List[np.ndarray] = []
        have = 0
        attempts = 0

        while have < count:
            if attempts >= self.max_attempts:
                rate = have / max(1, attempts)
                raise ErrResource(f"pinned walks for pattern {format_bits(code_to_bits(code, self.history.length))} exhausted {attempts} attempts (estimated P(D) = {rate:.3g})", acceptance_rate=rate)
            batch = min(self.max_attempts - attempts, PINNED_WALK_BATCH)
            walks = pinned_trajectories(self.config, self.history.position_at(-k), -k, batch, rng)
            attempts += batch
            keep = walks[trace_codes(walks, self.history, self.config.start_time) == code]
            found.append(keep)
            have += len(keep)

        accepted, tried = self.acceptance.get(code, (0, 0))
        self.acceptance[code] = (accepted + have, tried + attempts)
        return np.concatenate(found)[:count]

    def acceptance_rates(self) -> Dict[str, float]:
        return {format_bits(code_to_bits(code, self.history.length)): accepted / tried for code, (accepted, tried) in self.acceptance.items() if tried}


def coupled_fields(history: PathObservation, config: EnvConfig, sampler: AnchoredSampler, query_radius: int,
                   rng: np.random.Generator) -> Tuple[ParticleField, ParticleField, AnchoredParticles]:
    """The history-avoiding field and, on the same particles plus the anchored ones, the conditioned field."""
    avoiding = sample_avoiding_field(config, history, query_radius, rng)
    anchored = sampler.sample(rng)
    return avoiding, avoiding.concat(ParticleField(anchored.trajectories, config.start_time)), anchored


def sample_QA_anchored(history: PathObservation, config: EnvConfig, sampler: AnchoredSampler, query_radius: int,
                       rng: np.random.Generator) -> Tuple[ParticleField, AnchoredParticles]:
    """A field conditioned on the observation: history-avoiding field plus anchored particles."""
    _, conditioned, anchored = coupled_fields(history, config, sampler, query_radius, rng)
    return conditioned, anchored


def dominates(upper: ParticleField, lower: ParticleField, points: Sequence[Tuple[int, np.ndarray]]) -> bool:
    """Whether ``upper`` has at least the count of ``lower`` at every space-time point."""
    return all(upper.count(site, t) >= lower.count(site, t) for t, site in points)


def avoidance_probability(kernel: JumpKernel, site: Sequence[int], time: int, points: Sequence[SpaceTimePoint],
                          samples: int, rng: np.random.Generator) -> Tuple[float, int]:
    """Fraction of backward walks from ``(site, time)`` missing every point; also the success count."""
    earlier = [(point_time, point_site) for point_time, point_site in points if point_time < time]
    if not earlier:
        return 1.0, samples

    earliest = min(point_time for point_time, _ in earlier)
    steps = time - earliest
    d = kernel.d
    walks = np.asarray(site, dtype=np.int64) + np.cumsum(kernel.reversed().sample(rng, samples * steps).reshape(samples, steps, d), axis=1)
    hit = np.zeros(samples, dtype=bool)
    for point_time, point_site in earlier:
        hit |= np.all(walks[:, time - point_time - 1, :] == np.asarray(point_site), axis=1)

    successes = int((~hit).sum())
    return successes / samples, successes


def future_points(future: np.ndarray, t: int) -> List[SpaceTimePoint]:
    return [(s, tuple(int(value) for value in future[s])) for s in range(t)]


def estimate_lambda_future(history: PathObservation, future: np.ndarray, t: int, config: EnvConfig,
                           mc_samples: int, rng: np.random.Generator) -> RateEstimate:
    """Density of particles at ``(future_t, t)`` not met before on the future path nor on the history."""
    if not 0 <= t < len(future):
        raise ErrUsage(f"time {t} outside the future path of length {len(future)}")
    if config.density == 0:
        return RateEstimate(0.0, 0.0, mc_samples)

    points = history.points() + future_points(future, t)
    _, successes = avoidance_probability(config.env_kernel, future[t], t, points, mc_samples, rng)
    return RateEstimate.from_successes(config.density, successes, mc_samples)


class LambdaSweep:
    def __init__(self, estimate: RateEstimate, argmin: str, table: List[Tuple[str, str, int, RateEstimate]]) -> None:
        self.estimate = estimate
        self.argmin = argmin
        self.table = table


def lambda_star(histories: Sequence[PathObservation], futures: Dict[str, np.ndarray], config: EnvConfig,
                mc_samples: int, rng: np.random.Generator) -> LambdaSweep:
    """Minimum of the future densities over a finite family of histories, future shapes and times."""
    rows: List[Tuple[str, str, int, RateEstimate]] = []
    for history in histories:
        for shape, future in futures.items():
            for t in range(len(future)):
                rows.append((history.name, shape, t, estimate_lambda_future(history, future, t, config, mc_samples, rng)))

    if not rows:
        raise ErrUsage("lambda_* needs at least one history and one future path")
    name, shape, t, best = min(rows, key=lambda row: row[3].value)
    logging.info(f"lambda_* ~ {best.value:.4g} +- {best.ci:.2g}, attained at history {name}, future {shape}, t = {t}")
    return LambdaSweep(best, f"{name}/{shape}/{t}", rows)


class QRSSplit:
    def __init__(self, q: np.ndarray, r: np.ndarray, s: np.ndarray) -> None:
        self.q = q
        self.r = r
        self.s = s


def qrs_split(records: Sequence[LazyStepRecord], rng: np.random.Generator, lambda_star_value: Optional[float] = None,
              lambda_future: Optional[Sequence[float]] = None) -> QRSSplit:
    """Per-step ``Q_t`` (rate ``lambda_*``), residual ``R_t`` and anchored first hits ``S_t``.

    Without rates, the split recorded by the engine is used. With rates, the new survivors at
    step ``t`` are thinned into ``Q`` with probability ``lambda_* / lambda(t)``.
    """
    steps = len(records)
    q = np.zeros(steps, dtype=np.int64)
    r = np.zeros(steps, dtype=np.int64)
    s = np.zeros(steps, dtype=np.int64)

    for index, record in enumerate(records):
        s[index] = record.s
        if lambda_star_value is None:
            q[index], r[index] = record.q, record.r
        else:
            if lambda_future is None:
                raise ErrUsage("thinning needs the per-step future densities")
            rate = lambda_future[index]
            fraction = min(1.0, lambda_star_value / rate) if rate > 0 else 0.0
            q[index] = rng.binomial(record.survivors, fraction)
            r[index] = record.survivors - q[index]

        if q[index] + r[index] + s[index] != record.newly_revealed:
            raise ErrInvariant(f"Q + R + S = {q[index] + r[index] + s[index]} but {record.newly_revealed} particles were new at t = {record.t}")

    return QRSSplit(q, r, s)


def lambda_along_path(history: PathObservation, records: Sequence[LazyStepRecord], config: EnvConfig,
                      mc_samples: int, rng: np.random.Generator) -> List[RateEstimate]:
    """``lambda(gamma, gamma', t)`` at every step of a lazy run, ``gamma'`` being the queried sites."""
    if any(record.t != index for index, record in enumerate(records)):
        raise ErrUsage("the run must query times 0, 1, 2, ... in order")
    future = np.asarray([record.site for record in records], dtype=np.int64).reshape(-1, config.d)
    return [estimate_lambda_future(history, future, t, config, mc_samples, rng) for t in range(len(records))]


class SpreadProfile:
    def __init__(self, elapsed: np.ndarray, values: np.ndarray, slope: float, pvalue: float) -> None:
        self.elapsed = elapsed
        self.values = values
        self.slope = slope
        self.pvalue = pvalue

    def no_upward_trend(self, level: float = 0.05) -> bool:
        return not (self.slope > 0 and self.pvalue < level)


def anchored_spread_profile(sampler: AnchoredSampler, times: Sequence[int], reps: int, rng: np.random.Generator) -> SpreadProfile:
    """``sup_x P(Z_t = x | anchor) (t - z)^{d/2}`` for anchored particles, relative to the anchor point."""
    history = sampler.history
    config = sampler.config
    displacements: Dict[int, List[np.ndarray]] = {time: [] for time in times}
    elapsed_of: Dict[int, List[int]] = {time: [] for time in times}

    for _ in range(reps):
        anchored = sampler.sample(rng)
        for trajectory, anchor_time in zip(anchored.trajectories, anchored.anchor_times):
            anchor_site = history.position_at(int(anchor_time))
            for time in times:
                displacements[time].append(trajectory[time - config.start_time] - anchor_site)
                elapsed_of[time].append(time - int(anchor_time))

    elapsed = []
    values = []
    for time in times:
        if not displacements[time]:
            continue
        # Group by elapsed time so the sup is over one law.
        groups: Dict[int, List[np.ndarray]] = dict()
        for displacement, gap in zip(displacements[time], elapsed_of[time]):
            groups.setdefault(gap, []).append(displacement)
        gap, members = max(groups.items(), key=lambda item: len(item[1]))
        _, frequencies = np.unique(np.asarray(members), axis=0, return_counts=True)
        elapsed.append(gap)
        values.append(frequencies.max() / len(members) * gap ** (config.d / 2))

    if len(values) < 3:
        return SpreadProfile(np.asarray(elapsed), np.asarray(values), 0.0, 1.0)
    fit = stats.linregress(np.log(elapsed), np.log(values))
    return SpreadProfile(np.asarray(elapsed), np.asarray(values), float(fit.slope), float(fit.pvalue))


class IndependenceCheck:
    def __init__(self, correlation: float, standard_error: float, reps: int) -> None:
        self.correlation = correlation
        self.standard_error = standard_error
        self.reps = reps

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.correlation) <= sigmas * self.standard_error


def anchored_independence(history: PathObservation, config: EnvConfig, sampler: AnchoredSampler, query_radius: int,
                          reps: int, rng: np.random.Generator) -> IndependenceCheck:
    """Correlation between the anchored count and the occupied-site count of the avoiding field at time 0."""
    anchored_counts = np.zeros(reps)
    occupied = np.zeros(reps)

    for rep in range(reps):
        avoiding = sample_avoiding_field(config, history, query_radius, rng)
        anchored_counts[rep] = sampler.sample(rng).count
        positions = avoiding.positions_at(0)
        inside = np.max(np.abs(positions), axis=1) <= query_radius if len(positions) else np.zeros(0, dtype=bool)
        occupied[rep] = len(np.unique(positions[inside], axis=0)) if inside.any() else 0

    if np.std(anchored_counts) == 0 or np.std(occupied) == 0:
        return IndependenceCheck(0.0, 1.0 / np.sqrt(reps), reps)
    correlation = float(stats.pearsonr(anchored_counts, occupied)[0])
    return IndependenceCheck(correlation, 1.0 / np.sqrt(reps), reps)
