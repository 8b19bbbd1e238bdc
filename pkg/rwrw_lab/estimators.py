"""Annealed Monte Carlo estimators of the walker's speed, tails, variance and scaling limit."""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from rwrw_lab.constants import Z_95
from rwrw_lab.environment import EnvConfig
from rwrw_lab.errors import ErrUsage
from rwrw_lab.kernels import JumpKernel
from rwrw_lab.occupancy import OccupancyOracle
from rwrw_lab.parallel import RandomSource, replicate
from rwrw_lab.walker import WalkerConfig, plain_walk_positions, run_quenched

SPEED_BATCHES = 20
CENSORING_COUNT = 5
FCLT_MARKS: Tuple[float, ...] = (0.25, 0.5, 1.0)


def positions_block(reps: int, rng: np.random.Generator, config: EnvConfig, walker_config: WalkerConfig, times: List[int]) -> np.ndarray:
    """Walker positions at ``times`` for ``reps`` independent (environment, walk) pairs."""
    horizon = max(times)
    if config.density == 0 or walker_config.is_environment_blind():
        return plain_walk_positions(walker_config.alpha0, times, reps, rng)

    config = config.with_window(max(horizon, 1), past_depth=0)
    positions = np.zeros((reps, len(times), config.d), dtype=np.int64)
    for rep in range(reps):
        run = run_quenched(OccupancyOracle.lazy(config, rng), walker_config, horizon, rng)
        positions[rep] = run.positions[times]
    return positions


def sample_positions(source: RandomSource, config: EnvConfig, walker_config: WalkerConfig, times: Sequence[int], reps: int) -> np.ndarray:
    times = sorted(set(int(time) for time in times))
    if reps < 1:
        raise ErrUsage("need at least one replica")
    return np.concatenate(replicate(source, positions_block, reps, config, walker_config, times))


def batch_means_ci(values: np.ndarray, batches: int = SPEED_BATCHES) -> Tuple[np.ndarray, np.ndarray]:
    """Mean over the first axis and the 95% half-width from batch means."""
    batches = max(2, min(batches, len(values)))
    means = np.stack([chunk.mean(axis=0) for chunk in np.array_split(values, batches)])
    half_width = stats.t.ppf(0.975, batches - 1) * means.std(axis=0, ddof=1) / math.sqrt(batches)
    return values.mean(axis=0), half_width


class SpeedEstimate:
    def __init__(self, v_hat: np.ndarray, ci: np.ndarray, T: int, reps: int, partials: Dict[int, Tuple[np.ndarray, np.ndarray]]) -> None:
        self.v_hat = v_hat
        self.ci = ci
        self.T = T
        self.reps = reps
        self.partials = partials

    def cauchy_check(self) -> bool:
        """The last two dyadic partial estimates agree within their combined CI."""
        times = sorted(self.partials)
        if len(times) < 2:
            return True
        (earlier, earlier_ci), (later, later_ci) = self.partials[times[-2]], self.partials[times[-1]]
        return bool(np.all(np.abs(later - earlier) <= earlier_ci + later_ci))

    def contains(self, value: Sequence[float]) -> bool:
        return bool(np.all(np.abs(self.v_hat - np.asarray(value)) <= self.ci))

    def to_dict(self) -> Dict[str, object]:
        return {"vHat": self.v_hat.tolist(), "ci": self.ci.tolist(), "T": self.T, "reps": self.reps}


def dyadic_times(T: int) -> List[int]:
    times = [1 << k for k in range(T.bit_length()) if 1 << k <= T]
    return sorted(set(times + [T]))


def estimate_speed(config: EnvConfig, walker_config: WalkerConfig, T: int, reps: int, rng: RandomSource) -> SpeedEstimate:
    if T < 1 or reps < 2:
        raise ErrUsage(f"speed needs T >= 1 and reps >= 2, got T = {T}, reps = {reps}")

    times = dyadic_times(T)
    positions = sample_positions(rng, config, walker_config, times, reps)
    partials = dict()
    for index, time in enumerate(times):
        partials[time] = batch_means_ci(positions[:, index, :] / time)

    v_hat, ci = partials[T]
    logging.info(f"Speed at T = {T}: {np.round(v_hat, 5).tolist()} +- {np.round(ci, 5).tolist()}")
    return SpeedEstimate(v_hat, ci, T, reps, partials)


def cramer_rate(kernel: JumpKernel, level: float, direction: Optional[Sequence[float]] = None) -> float:
    """``sup_theta (theta * level - log E exp(theta * direction . W))`` by numerical Legendre transform."""
    direction = np.asarray(direction if direction is not None else [1.0] + [0.0] * (kernel.d - 1), dtype=float)
    values, weights = kernel.projected(direction)
    if level > values.max() or level < values.min():
        return math.inf

    def negative_objective(theta: float) -> float:
        top = float(np.max(theta * values))
        return -(theta * level - (top + math.log(float(np.sum(weights * np.exp(theta * values - top))))))

    result = optimize.minimize_scalar(negative_objective, bounds=(-60.0, 60.0), method="bounded", options={"xatol": 1e-10})
    return float(max(0.0, -result.fun))


def bahadur_rao_rate(kernel: JumpKernel, mean: float, epsilon: float, t: int, direction: Optional[Sequence[float]] = None) -> float:
    """Finite-``t`` rate ``-log P / t`` with the lattice Bahadur-Rao prefactor, both tails added."""
    direction = np.asarray(direction if direction is not None else [1.0] + [0.0] * (kernel.d - 1), dtype=float)
    values, weights = kernel.projected(direction)
    total = 0.0

    for level in (mean + epsilon, mean - epsilon):
        rate = cramer_rate(kernel, level, direction)
        if not math.isfinite(rate):
            continue
        theta = optimize.brentq(lambda value: _tilted_mean(values, weights, value) - level, -60.0, 60.0) if abs(level - mean) > 1e-12 else 0.0
        if theta == 0.0:
            continue
        tilted = weights * np.exp(theta * values - np.max(theta * values))
        tilted /= tilted.sum()
        sigma = math.sqrt(float(np.sum(tilted * (values - level) ** 2)))
        total += math.exp(-t * rate) / ((1 - math.exp(-abs(theta))) * sigma * math.sqrt(2 * math.pi * t))

    return -math.log(total) / t if total > 0 else math.inf


def _tilted_mean(values: np.ndarray, weights: np.ndarray, theta: float) -> float:
    tilted = weights * np.exp(theta * values - np.max(theta * values))
    return float(np.sum(tilted * values) / np.sum(tilted))


class TailCurve:
    def __init__(self, t_grid: List[int], rates: np.ndarray, counts: np.ndarray, reps: int, epsilon: float,
                 trend_pvalue: float, cramer: Optional[float]) -> None:
        self.t_grid = t_grid
        self.rates = rates
        self.counts = counts
        self.reps = reps
        self.epsilon = epsilon
        self.trend_pvalue = trend_pvalue
        self.cramer = cramer

    @property
    def censored(self) -> np.ndarray:
        return self.counts < CENSORING_COUNT

    def rate_at(self, t: int) -> float:
        return float(self.rates[self.t_grid.index(t)])

    def positive_non_decreasing(self, level: float = 0.05) -> bool:
        observed = self.rates[~self.censored]
        return bool(len(observed) > 0 and np.all(observed > 0) and self.trend_pvalue > level)


def ldb_curve(config: EnvConfig, walker_config: WalkerConfig, epsilon: float, t_grid: Sequence[int], reps: int,
              rng: RandomSource, v_hat: Optional[np.ndarray] = None, direction: Optional[Sequence[float]] = None) -> TailCurve:
    """``-log P(|X_t / t - v| > epsilon) / t`` on ``t_grid``; points with fewer than five exceedances are censored."""
    if not epsilon > 0:
        raise ErrUsage(f"epsilon must be positive, got {epsilon}")
    t_grid = sorted(int(t) for t in t_grid)

    if v_hat is None:
        v_hat = estimate_speed(config, walker_config, t_grid[-1], max(2, reps // 4), rng).v_hat

    positions = sample_positions(rng, config, walker_config, t_grid, reps)
    counts = np.zeros(len(t_grid), dtype=np.int64)
    for index, t in enumerate(t_grid):
        deviation = positions[:, index, :] / t - v_hat
        distance = np.abs(deviation @ np.asarray(direction, dtype=float)) if direction is not None else np.linalg.norm(deviation, axis=1)
        counts[index] = int((distance > epsilon).sum())

    with np.errstate(divide="ignore"):
        rates = np.where(counts >= CENSORING_COUNT, -np.log(counts / reps) / np.asarray(t_grid), np.nan)
    censored = counts < CENSORING_COUNT
    if censored.any():
        logging.warning(f"Tail curve censored at t = {[t for t, flag in zip(t_grid, censored) if flag]} (fewer than {CENSORING_COUNT} exceedances)")

    observed_t = np.asarray(t_grid)[~censored]
    observed_rates = rates[~censored]
    trend_pvalue = 1.0
    if len(observed_t) >= 3:
        fit = stats.linregress(observed_t, observed_rates)
        # One-sided test against a decreasing rate.
        trend_pvalue = float(fit.pvalue / 2 if fit.slope < 0 else 1 - fit.pvalue / 2)

    cramer = None
    if config.density == 0 or walker_config.is_environment_blind():
        mean = float(np.asarray(direction if direction is not None else [1.0] + [0.0] * (config.d - 1)) @ walker_config.alpha0.mean())
        cramer = min(cramer_rate(walker_config.alpha0, mean + epsilon, direction), cramer_rate(walker_config.alpha0, mean - epsilon, direction))
    return TailCurve(t_grid, rates, counts, reps, epsilon, trend_pvalue, cramer)


class AnticoncentrationProfile:
    def __init__(self, n_grid: List[int], ball_probability: np.ndarray, ball_ci: np.ndarray, envelope_constant: float,
                 sup_mass_scaled: np.ndarray, sup_slope: float, sup_pvalue: float, epsilon: float, d: int) -> None:
        self.n_grid = n_grid
        self.ball_probability = ball_probability
        self.ball_ci = ball_ci
        self.envelope_constant = envelope_constant
        self.sup_mass_scaled = sup_mass_scaled
        self.sup_slope = sup_slope
        self.sup_pvalue = sup_pvalue
        self.epsilon = epsilon
        self.d = d

    def envelope(self, n: int) -> float:
        return self.envelope_constant * self.epsilon ** self.d * n ** (1 - self.d / 2)

    def below_envelope(self) -> bool:
        return all(p <= self.envelope(n) + ci for n, p, ci in zip(self.n_grid, self.ball_probability, self.ball_ci))

    def no_upward_trend(self, level: float = 0.05) -> bool:
        return not (self.sup_slope > 0 and self.sup_pvalue < level)


def anticoncentration_profile(positions: np.ndarray, n_grid: Sequence[int], epsilon: float) -> AnticoncentrationProfile:
    """Ball probabilities around the mean and ``sup_y P(X_n = y) n^{d/2}`` from sampled positions."""
    reps, _, d = positions.shape
    n_grid = list(n_grid)
    ball = np.zeros(len(n_grid))
    ball_ci = np.zeros(len(n_grid))
    sup_scaled = np.zeros(len(n_grid))

    for index, n in enumerate(n_grid):
        sample = positions[:, index, :]
        inside = np.linalg.norm(sample - sample.mean(axis=0), axis=1) <= epsilon
        ball[index] = inside.mean()
        ball_ci[index] = Z_95 * math.sqrt(ball[index] * (1 - ball[index]) / reps)
        _, frequencies = np.unique(sample, axis=0, return_counts=True)
        sup_scaled[index] = frequencies.max() / reps * n ** (d / 2)

    # Fitted on every grid point but the last, which stays a held-out check.
    fitted = max(1, len(n_grid) - 1)
    envelope_constant = max(ball[index] / (epsilon ** d * n_grid[index] ** (1 - d / 2)) for index in range(fitted))
    slope, pvalue = 0.0, 1.0
    if len(n_grid) >= 3:
        fit = stats.linregress(np.log(n_grid), np.log(np.maximum(sup_scaled, 1e-300)))
        slope, pvalue = float(fit.slope), float(fit.pvalue)
    return AnticoncentrationProfile(n_grid, ball, ball_ci, envelope_constant, sup_scaled, slope, pvalue, epsilon, d)


class VarianceCurve:
    def __init__(self, t_grid: List[int], variances: np.ndarray, ci: np.ndarray, direction: np.ndarray,
                 anticoncentration: Optional[AnticoncentrationProfile]) -> None:
        self.t_grid = t_grid
        self.variances = variances
        self.ci = ci
        self.direction = direction
        self.anticoncentration = anticoncentration

    def strictly_increasing(self) -> bool:
        """No significant drop between neighbouring grid points, and a significant rise from the first to the last."""
        lower = self.variances - self.ci
        upper = self.variances + self.ci
        no_drop = bool(np.all(upper[1:] > lower[:-1]))
        return no_drop and bool(lower[-1] > upper[0])

    def doubling_ratio(self) -> Optional[float]:
        """``Var(2t) / Var(t)`` at the largest pair of grid points differing by a factor 2."""
        pairs = [(t, 2 * t) for t in self.t_grid if 2 * t in self.t_grid]
        if not pairs:
            return None
        t, doubled = pairs[-1]
        return float(self.variances[self.t_grid.index(doubled)] / self.variances[self.t_grid.index(t)])


def variance_curve(config: EnvConfig, walker_config: WalkerConfig, direction: Sequence[float], t_grid: Sequence[int],
                   reps: int, rng: RandomSource, epsilon: float = 1.0) -> VarianceCurve:
    direction_array = np.asarray(direction, dtype=float)
    if direction_array.shape != (config.d,) or not np.any(direction_array != 0):
        raise ErrUsage("the direction must be a nonzero vector in dimension d")
    if reps < 2:
        raise ErrUsage("variance needs at least two replicas")
    t_grid = sorted(int(t) for t in t_grid)

    positions = sample_positions(rng, config, walker_config, t_grid, reps)
    projections = positions @ direction_array
    variances = projections.var(axis=0, ddof=1)
    ci = Z_95 * variances * math.sqrt(2 / (reps - 1))

    anticoncentration = None
    if config.density == 0:
        anticoncentration = anticoncentration_profile(positions, t_grid, epsilon)
    return VarianceCurve(t_grid, variances, ci, direction_array, anticoncentration)


class FCLTReport:
    def __init__(self, n: int, ks: Dict[float, np.ndarray], sigma_hat: np.ndarray, positive_definite: bool,
                 cross_time_z: Dict[Tuple[float, float], np.ndarray], reps: int) -> None:
        self.n = n
        self.ks = ks
        self.sigma_hat = sigma_hat
        self.positive_definite = positive_definite
        self.cross_time_z = cross_time_z
        self.reps = reps

    def max_ks(self) -> float:
        return float(max(values.max() for values in self.ks.values()))

    def ks_band(self, level: float = 0.05) -> float:
        """Asymptotic one-sample KS critical value at ``level``."""
        return float(stats.kstwobign.ppf(1 - level) / math.sqrt(self.reps))

    def max_cross_time_z(self) -> float:
        return float(max(np.abs(values).max() for values in self.cross_time_z.values()))


def fclt_report(config: EnvConfig, walker_config: WalkerConfig, n: int, reps: int, rng: RandomSource,
                v_hat: Optional[np.ndarray] = None) -> FCLTReport:
    """Standardised displacements ``(X_{floor(ns)} - v floor(ns)) / sqrt(n)`` at ``s`` in 1/4, 1/2, 1."""
    if n < 64:
        raise ErrUsage(f"the scaling report needs n >= 64, got {n}")
    if v_hat is None:
        v_hat = estimate_speed(config, walker_config, n, max(2, reps // 4), rng).v_hat

    times = [int(math.floor(n * mark)) for mark in FCLT_MARKS]
    positions = sample_positions(rng, config, walker_config, times, reps)
    scaled = {mark: (positions[:, index, :] - v_hat * time) / math.sqrt(n) for index, (mark, time) in enumerate(zip(FCLT_MARKS, times))}

    ks: Dict[float, np.ndarray] = dict()
    for mark, values in scaled.items():
        centered = values - values.mean(axis=0)
        spread = values.std(axis=0, ddof=1)
        ks[mark] = np.array([stats.kstest(centered[:, axis] / spread[axis], "norm").statistic if spread[axis] > 0 else 1.0 for axis in range(config.d)])

    final = scaled[1.0]
    sigma_hat = np.cov(final, rowvar=False).reshape(config.d, config.d)
    sigma_hat = (sigma_hat + sigma_hat.T) / 2
    eigenvalues = np.linalg.eigvalsh(sigma_hat)
    positive_definite = bool(eigenvalues.min() > 1e-10 * max(1.0, eigenvalues.max()))
    if not positive_definite:
        logging.warning(f"Estimated covariance is not positive definite: eigenvalues {eigenvalues}")

    cross_time_z: Dict[Tuple[float, float], np.ndarray] = dict()
    for first, second in [(a, b) for a in FCLT_MARKS for b in FCLT_MARKS if a < b]:
        x, y = scaled[first] - scaled[first].mean(axis=0), scaled[second] - scaled[second].mean(axis=0)
        products = x[:, :, None] * y[:, None, :]
        covariance = products.mean(axis=0)
        standard_error = products.std(axis=0, ddof=1) / math.sqrt(reps)
        expected = min(first, second) * sigma_hat
        with np.errstate(divide="ignore", invalid="ignore"):
            cross_time_z[(first, second)] = np.where(standard_error > 0, (covariance - expected) / standard_error, 0.0)

    return FCLTReport(n, ks, sigma_hat, positive_definite, cross_time_z, reps)
