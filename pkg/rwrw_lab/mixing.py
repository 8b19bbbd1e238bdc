"""Couplings of walkers under different observed histories, and empirical mixing curves."""

import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from rwrw_lab.bridge import AnchoredSampler, estimate_lambda_future
from rwrw_lab.cond_poisson import sample_zero_truncated_poisson
from rwrw_lab.constants import (DEFAULT_BLOCK_LOG_CONSTANT, DEFAULT_MAX_ATTEMPTS,
                                Z_95)
from rwrw_lab.environment import EnvConfig, PathObservation
from rwrw_lab.errors import ErrDomain, ErrInvariant, ErrResource, ErrUsage
from rwrw_lab.histories import shape_increments
from rwrw_lab.occupancy import OccupancyOracle, lazy_reveal_step
from rwrw_lab.streams import shared_noise_stream
from rwrw_lab.total_variation import TVEstimate, bits_as_codes, tv_empirical
from rwrw_lab.walker import JumpNoise, WalkerConfig

DEFAULT_FUTURE_SAMPLES = 256


class CouplingOutcome:
    def __init__(self, tau: Optional[int], n: int, m: int, conditioned_on_q: bool, xi_agree: bool) -> None:
        self.tau = tau
        self.n = n
        self.m = m
        self.conditioned_on_q = conditioned_on_q
        self.xi_agree = xi_agree

    @property
    def failed(self) -> bool:
        return self.tau is not None

    def to_dict(self) -> Dict[str, object]:
        return {
            "tau": "inf" if self.tau is None else self.tau,
            "n": self.n,
            "m": self.m,
            "conditionedOnQ": int(self.conditioned_on_q),
            "xiAgree": int(self.xi_agree)
        }


def sample_q_block(lambda_star: float, length: int, rng: np.random.Generator) -> np.ndarray:
    """The path-independent stream on a block, conditioned on being positive at every time."""
    return sample_zero_truncated_poisson(lambda_star, length, rng)


def coupled_run(history: PathObservation, config: EnvConfig, walker_config: WalkerConfig, sampler: AnchoredSampler,
                lambda_star: float, n: int, m: int, rng: np.random.Generator,
                noise_rng: Optional[np.random.Generator] = None, condition_on_q: bool = True,
                future_samples: int = DEFAULT_FUTURE_SAMPLES) -> CouplingOutcome:
    """Walkers in the history-avoiding field and in the conditioned field, on shared randomness.

    Both environments share the avoiding part (revealed lazily along the common path) and
    the jump noise; the conditioned one also carries the anchored particles. The walkers
    move together until their occupancy bits first differ, which needs the path-independent
    stream ``Q_t`` to vanish. With ``condition_on_q`` that stream is forced positive on
    ``[0, n]``. ``tau`` is the first discrepancy, ``None`` if none happens up to ``n + m``.
    """
    if n < 1 or m < 1:
        raise ErrUsage(f"coupling window needs n, m >= 1, got n = {n}, m = {m}")
    if config.horizon < n + m:
        raise ErrUsage(f"horizon {config.horizon} is shorter than the coupling window n + m = {n + m}")

    noise = JumpNoise.sample(walker_config, n + m + 1, noise_rng or rng)
    anchored = sampler.sample(rng).trajectories
    oracle = OccupancyOracle.lazy(config, rng, history=history)
    conditioned = condition_on_q and lambda_star > 0 and config.density > 0

    path = np.zeros((n + m + 2, config.d), dtype=np.int64)
    bits_avoiding: List[int] = []
    bits_conditioned: List[int] = []
    tau: Optional[int] = None

    for t in range(n + m + 1):
        site = path[t]
        fraction = 0.0
        if lambda_star > 0 and config.density > 0:
            local = estimate_lambda_future(history, path[:t + 1], t, config, future_samples, rng).value
            fraction = min(1.0, lambda_star / local) if local > 0 else 1.0
        forced = int(sample_q_block(lambda_star, 1, rng)[0]) if conditioned and t <= n else None

        record = lazy_reveal_step(oracle, site, t, rng, q_fraction=fraction, forced_q=forced)
        extra = int(np.all(anchored[:, t - config.start_time, :] == site, axis=1).sum()) if len(anchored) else 0
        bit_avoiding = int(record.count > 0)
        bit_conditioned = int(record.count + extra > 0)
        bits_avoiding.append(bit_avoiding)
        bits_conditioned.append(bit_conditioned)

        if bit_avoiding != bit_conditioned:
            if record.q > 0:
                raise ErrInvariant(f"occupancy bits differ at t = {t} although Q_t = {record.q}")
            tau = t
            break

        path[t + 1] = site + noise.jump(t, bit_conditioned)

    window = slice(n + 1, n + m + 1)
    jumps_avoiding = [tuple(noise.jump(t, bit)) for t, bit in enumerate(bits_avoiding)][window]
    jumps_conditioned = [tuple(noise.jump(t, bit)) for t, bit in enumerate(bits_conditioned)][window]
    xi_agree = bits_avoiding[window] == bits_conditioned[window] and jumps_avoiding == jumps_conditioned

    if tau is None and not xi_agree:
        raise ErrInvariant("coupling reported no discrepancy but the emitted windows differ")
    return CouplingOutcome(tau, n, m, conditioned, xi_agree)


def coupling_failures(history: PathObservation, config: EnvConfig, walker_config: WalkerConfig, sampler: AnchoredSampler,
                      lambda_star: float, n: int, m: int, reps: int, rng: np.random.Generator,
                      noise_rngs: Optional[Sequence[np.random.Generator]] = None, condition_on_q: bool = True) -> np.ndarray:
    failures = np.zeros(reps, dtype=bool)
    for rep in range(reps):
        noise_rng = noise_rngs[rep] if noise_rngs is not None else None
        failures[rep] = coupled_run(history, config, walker_config, sampler, lambda_star, n, m, rng, noise_rng, condition_on_q).failed
    return failures


def block_failure_probability(p_good: float, horizon: int, block_length: int) -> float:
    """Probability that ``horizon`` Bernoulli(``p_good``) trials contain no run of ``block_length`` successes."""
    if block_length <= 0:
        return 0.0
    if horizon < block_length:
        return 1.0

    # state[j]: no run completed yet and the current run has length j.
    state = np.zeros(block_length)
    state[0] = 1.0
    for _ in range(horizon):
        following = np.zeros(block_length)
        following[0] = state.sum() * (1 - p_good)
        following[1:] = state[:-1] * p_good
        state = following
    return float(state.sum())


def block_length_for(t: int, constant: float = DEFAULT_BLOCK_LOG_CONSTANT) -> int:
    return max(1, math.ceil(constant * math.log(max(t, 2))))


class PhiBound:
    def __init__(self, t: int, block_length: int, raw: TVEstimate, block_failure: float, assembled: float, pair: Tuple[str, str]) -> None:
        self.t = t
        self.block_length = block_length
        self.raw = raw
        self.block_failure = block_failure
        self.assembled = assembled
        self.pair = pair

    def csv_row(self, family_id: str, window: int) -> List[object]:
        return [self.t, self.assembled, self.raw.ci, window, family_id]


def phi_upper_curve(family: Sequence[PathObservation], config: EnvConfig, walker_config: WalkerConfig,
                    samplers: Dict[str, AnchoredSampler], lambda_star: float, t_grid: Sequence[int], window: int,
                    reps: int, rng: np.random.Generator, noise_seed: Optional[int] = None,
                    block_constant: float = DEFAULT_BLOCK_LOG_CONSTANT) -> List[PhiBound]:
    """Coupling upper bounds on the windowed mixing distance, maximised over pairs of histories.

    Every history is coupled to the common history-avoiding reference; a pair's bound is the
    sum of both failure probabilities. Runs of different histories share their jump noise
    replica by replica. The assembled bound adds twice the probability that no good block of
    the path-independent stream occurs before ``t``.
    """
    names = [history.name for history in family]
    distinct_pairs = [(first, second) for first, second in itertools.combinations(range(len(family)), 2)]
    failure_cache: Dict[Tuple[int, int], Tuple[float, float]] = dict()
    bounds: List[PhiBound] = []

    for t in t_grid:
        length = block_length_for(t, block_constant)
        if config.density == 0 or not distinct_pairs:
            zero = TVEstimate(0.0, 0.0, f"xi window of {window} steps after a {length}-block", 1, reps)
            bounds.append(PhiBound(t, length, zero, 0.0, 0.0, ("", "")))
            continue

        for index, history in enumerate(family):
            if (index, length) in failure_cache:
                continue
            noise_rngs = None
            if noise_seed is not None:
                noise_rngs = [shared_noise_stream(noise_seed, rep).generator() for rep in range(reps)]
            failures = coupling_failures(history, config, walker_config, samplers[history.name], lambda_star, length, window, reps, rng, noise_rngs)
            p = float(failures.mean())
            failure_cache[(index, length)] = (p, Z_95 * math.sqrt(p * (1 - p) / reps))

        first, second = max(distinct_pairs, key=lambda pair: failure_cache[(pair[0], length)][0] + failure_cache[(pair[1], length)][0])
        p_first, ci_first = failure_cache[(first, length)]
        p_second, ci_second = failure_cache[(second, length)]
        raw = TVEstimate(min(1.0, p_first + p_second), ci_first + ci_second, f"xi window of {window} steps after a {length}-block", 1, reps)

        block_failure = block_failure_probability(-math.expm1(-lambda_star), t, length + 1) if lambda_star > 0 else 1.0
        assembled = min(1.0, raw.value + 2 * block_failure)
        logging.info(f"phi bound at t = {t}: raw {raw.value:.4f} +- {raw.ci:.4f}, block failure {block_failure:.3g}, assembled {assembled:.4f}")
        bounds.append(PhiBound(t, length, raw, block_failure, assembled, (names[first], names[second])))

    return bounds


def phi_curve_shape(bounds: Sequence[PhiBound]) -> Tuple[bool, bool]:
    """Whether the assembled bounds are non-increasing in ``t`` within CI, and whether the last is below half the first."""
    values = [(bound.assembled, bound.raw.ci) for bound in sorted(bounds, key=lambda bound: bound.t)]
    non_increasing = all(later - later_ci <= earlier + earlier_ci for (earlier, earlier_ci), (later, later_ci) in zip(values, values[1:]))
    halves = len(values) >= 2 and values[-1][0] < values[0][0] / 2
    return non_increasing, halves


def path_site(shape: str, d: int, time: int) -> np.ndarray:
    """Site of a deterministic path through the origin at time 0, extended to both sides."""
    steps = np.asarray(shape_increments(shape, d, abs(time)), dtype=np.int64).reshape(-1, d)
    offset = steps.sum(axis=0) if len(steps) else np.zeros(d, dtype=np.int64)
    if shape == "staircase" and time < 0:
        # Walking backwards, the staircase alternates starting from its last step.
        offset = np.asarray(shape_increments(shape, d, abs(time) + 1), dtype=np.int64)[1:].sum(axis=0)
    return offset if time >= 0 else -offset


class FixedPathMixing:
    def __init__(self, n_grid: List[int], estimates: List[TVEstimate], exponent: float, envelope_constant: float,
                 envelope_exponent: float, acceptance_rate: float) -> None:
        self.n_grid = n_grid
        self.estimates = estimates
        self.exponent = exponent
        self.envelope_constant = envelope_constant
        self.envelope_exponent = envelope_exponent
        self.acceptance_rate = acceptance_rate

    def below_envelope(self) -> bool:
        return all(estimate.value <= self.envelope_constant * n ** self.envelope_exponent + estimate.ci
                   for n, estimate in zip(self.n_grid, self.estimates))

    def non_increasing(self) -> bool:
        values = [(estimate.value, estimate.ci) for estimate in self.estimates]
        return all(later - later_ci <= earlier + earlier_ci for (earlier, earlier_ci), (later, later_ci) in zip(values, values[1:]))


def _window_times(n_grid: Sequence[int], window: int) -> List[int]:
    return sorted({n + offset for n in n_grid for offset in range(window)})


def _observe_path(oracle: OccupancyOracle, shape: str, times: Sequence[int], rng: np.random.Generator) -> Dict[int, int]:
    bits = dict()
    for time in times:
        record = lazy_reveal_step(oracle, path_site(shape, oracle.config.d, time), time, rng)
        bits[time] = int(record.count > 0)
    return bits


def fixed_path_mixing(config: EnvConfig, shape: str, history_length: int, sigma: Sequence[int], n_grid: Sequence[int],
                      window: int, reps: int, rng: np.random.Generator,
                      max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> FixedPathMixing:
    """TV between the occupancy bits seen on a fixed path in ``[n, n + window)`` with and without
    conditioning on the bits at times ``-history_length .. 0``."""
    if len(sigma) != history_length + 1:
        raise ErrUsage(f"need {history_length + 1} conditioning bits, got {len(sigma)}")
    if not 1 <= window <= 8:
        raise ErrUsage(f"window must be between 1 and 8, got {window}")
    if history_length > config.past_depth:
        raise ErrUsage(f"history length {history_length} exceeds the past depth {config.past_depth}")
    if max(n_grid) + window - 1 > config.horizon:
        raise ErrUsage(f"horizon {config.horizon} does not cover the last window")
    if min(n_grid) < 1:
        raise ErrUsage("window starts must be positive")
    if config.density == 0 and any(sigma):
        raise ErrDomain("an empty field never shows an occupied site")

    conditioning_times = list(range(-history_length, 1))
    times = _window_times(n_grid, window)
    conditioned = np.zeros((reps, len(times)), dtype=np.int64)
    reference = np.zeros((reps, len(times)), dtype=np.int64)
    attempts = 0

    for rep in range(reps):
        while True:
            if attempts >= max_attempts:
                raise ErrResource(f"conditioning on the observed bits exhausted {max_attempts} attempts", acceptance_rate=rep / max(1, attempts))
            attempts += 1
            oracle = OccupancyOracle.lazy(config, rng)
            seen = _observe_path(oracle, shape, conditioning_times, rng)
            if all(seen[time] == bit for time, bit in zip(conditioning_times, sigma)):
                break
        bits = _observe_path(oracle, shape, times, rng)
        conditioned[rep] = [bits[time] for time in times]

        bits = _observe_path(OccupancyOracle.lazy(config, rng), shape, times, rng)
        reference[rep] = [bits[time] for time in times]

    acceptance_rate = reps / attempts
    logging.info(f"Fixed-path conditioning accepted {reps} of {attempts} attempts ({acceptance_rate:.3g})")

    index_of = {time: index for index, time in enumerate(times)}
    estimates = []
    for n in n_grid:
        columns = [index_of[n + offset] for offset in range(window)]
        estimates.append(tv_empirical(conditioned[:, columns], reference[:, columns], feature_map=bits_as_codes,
                                      feature_space=f"Z[{n},{n + window - 1}]", feature_count=1 << window, rng=rng))

    positive = [(n, estimate.value) for n, estimate in zip(n_grid, estimates) if estimate.value > 0]
    exponent = 0.0
    if len(positive) >= 2:
        exponent = float(stats.linregress(np.log([n for n, _ in positive]), np.log([value for _, value in positive])).slope)

    envelope_exponent = -config.d / 2 + 2
    # The last grid point is held out of the fit.
    fitted = max(1, len(n_grid) - 1)
    envelope_constant = max(estimate.value * n ** -envelope_exponent for n, estimate in zip(n_grid[:fitted], estimates))
    return FixedPathMixing(list(n_grid), estimates, exponent, envelope_constant, envelope_exponent, acceptance_rate)
