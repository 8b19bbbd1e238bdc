"""Independent Poisson vectors conditioned on "at least one point in each constraint set"."""

import logging
import math
from typing import Any, Dict, Iterator, List, Tuple, Union

import numpy as np
from scipy import stats

from rwrw_lab.bit_index import (BitIndex, ConstraintFamily, RateTable,
                                code_to_bits, poisson_upper_tail_bound)
from rwrw_lab.constants import (DEFAULT_COUNT_CAP, DEFAULT_DOMINATION_TRUNCATION,
                                DEFAULT_ENUMERATION_BUDGET, DEFAULT_MAX_ATTEMPTS,
                                DEFAULT_TAIL_TOLERANCE)
from rwrw_lab.errors import ErrDomain, ErrResource, ErrUsage

MAX_DOMINATION_SHIFT = 10_000


def min_domination_shift(lam: float,
                         truncation: int = DEFAULT_DOMINATION_TRUNCATION,
                         tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> int:
    """Smallest ``n`` with ``P(Z >= k | Z >= 1) <= P(Z + n >= k)`` for all ``k``, ``Z ~ Poi(lam)``.

    Levels ``k <= truncation`` are checked numerically. Beyond the truncation the check is
    certified analytically: for ``k > n`` one has ``P(Z >= k - n) >= P(Z >= k) (k)_n / lam^n``,
    so the inequality holds for every ``k >= K`` once ``(K)_n / lam^n >= 1 / P(Z >= 1)``.
    Failing the certificate, an uncertified tail of conditional mass at most ``tail_tolerance``
    is accepted.
    """
    if not lam > 0:
        raise ErrDomain(f"conditioning on Z >= 1 needs lambda > 0, got {lam}")
    if truncation < 1:
        raise ErrUsage("truncation must be at least 1")

    levels = np.arange(1, truncation + 1)
    log_at_least_one = math.log(-math.expm1(-lam))
    log_conditional = stats.poisson.logsf(levels - 1, lam) - log_at_least_one

    for shift in range(1, MAX_DOMINATION_SHIFT):
        log_shifted = np.where(levels - shift <= 0, 0.0, stats.poisson.logsf(levels - shift - 1, lam))
        both_vanish = np.isneginf(log_conditional) & np.isneginf(log_shifted)
        holds = both_vanish | (log_conditional <= log_shifted + 1e-12)
        if not np.all(holds):
            continue

        first_unchecked = truncation + 1
        if first_unchecked <= shift:
            return shift

        log_falling = math.lgamma(first_unchecked + 1) - math.lgamma(first_unchecked - shift + 1) - shift * math.log(lam)
        if log_falling >= -log_at_least_one:
            return shift

        uncertified_mass = math.exp(stats.poisson.logsf(truncation, lam) - log_at_least_one)
        if uncertified_mass <= tail_tolerance:
            logging.debug(f"Domination shift {shift} for lambda = {lam} accepted with uncertified tail {uncertified_mass:.3g}")
            return shift

    raise ErrResource(f"no domination shift found for lambda = {lam} below {MAX_DOMINATION_SHIFT}")


def sample_zero_truncated_poisson(rate: float, size: Union[int, Tuple[int, ...]], rng: np.random.Generator) -> np.ndarray:
    """Draws from ``Poi(rate)`` conditioned on being at least one (inverse CDF)."""
    if not rate > 0:
        raise ErrDomain(f"Poi({rate}) conditioned on >= 1 is undefined")

    void = math.exp(-rate)
    uniforms = rng.uniform(size=size)
    levels = void + uniforms * -math.expm1(-rate)
    # ppf(1) is infinite
    draws = stats.poisson.ppf(np.minimum(levels, np.nextafter(1.0, 0.0)), rate)
    return np.maximum(draws, 1).astype(np.int64)


def count_fit_pvalue(counts: np.ndarray, law: Any, start: int = 0) -> float:
    """Chi-square p-value of integer ``counts`` against a frozen scipy ``law`` conditioned on ``>= start``.

    Bins run from ``start`` up to the last level expecting at least 5 observations; the last
    bin collects the upper tail.
    """
    counts = np.asarray(counts)
    reps = len(counts)
    norm = float(law.sf(start - 1))
    top = start
    while law.sf(top) / norm * reps >= 5:
        top += 1
    if top == start:
        return 1.0

    levels = np.arange(start, top)
    observed = np.append([(counts == level).sum() for level in levels], (counts >= top).sum())
    expected = np.append(law.pmf(levels), law.sf(top - 1)) / norm * reps
    return float(stats.chisquare(observed, expected * observed.sum() / expected.sum()).pvalue)


def enumerable_count_cap(size: int, budget: int) -> int:
    """Largest count cap whose truncated support over ``size`` indices fits in ``budget`` vectors; -1 if none."""
    if size < 1:
        raise ErrUsage("need at least one index")
    base = int(budget ** (1 / size))
    while (base + 1) ** size <= budget:
        base += 1
    while base > 0 and base ** size > budget:
        base -= 1
    return base - 1


def constraint_matrix(constraints: ConstraintFamily) -> np.ndarray:
    positions = constraints.sorted_positions()
    if not positions:
        return np.zeros((0, 1 << constraints.n), dtype=np.int64)
    return np.stack([constraints.constraint_mask(position) for position in positions]).astype(np.int64)


def _subset_unions(constraints: ConstraintFamily) -> Tuple[np.ndarray, np.ndarray]:
    """Union masks and inclusion-exclusion signs for every subset of the constraints."""
    matrix = constraint_matrix(constraints).astype(bool)
    count = matrix.shape[0]
    unions = np.zeros((1 << count, 1 << constraints.n), dtype=bool)
    signs = np.ones(1 << count)

    for subset in range(1, 1 << count):
        lowest = (subset & -subset).bit_length() - 1
        unions[subset] = unions[subset & (subset - 1)] | matrix[lowest]
        signs[subset] = -signs[subset & (subset - 1)]

    return unions, signs


def constraint_probability(table: RateTable, constraints: ConstraintFamily) -> float:
    """``P(C)`` by inclusion-exclusion over subsets of constraints."""
    constraints.check_feasible(table)
    unions, signs = _subset_unions(constraints)
    masses = unions.astype(float) @ table.rates
    return float(max(0.0, np.sum(signs * np.exp(-masses))))


def truncated_constraint_probability(table: RateTable, constraints: ConstraintFamily, count_cap: int) -> float:
    """``P(C and every count <= count_cap)`` by the same inclusion-exclusion."""
    unions, signs = _subset_unions(constraints)
    log_cdf = stats.poisson.logcdf(count_cap, table.rates)
    log_cdf = np.where(table.rates == 0, 0.0, log_cdf)
    total = 0.0

    for subset in range(unions.shape[0]):
        union = unions[subset]
        total += signs[subset] * math.exp(float(np.sum(log_cdf[~union]) - np.sum(table.rates[union])))

    return max(0.0, total)


class ConditionalPmf:
    """Exact law of the counts given ``C``, truncated at ``count_cap`` and renormalized."""

    def __init__(self, table: RateTable, constraints: ConstraintFamily, count_cap: int, budget: int) -> None:
        constraints.check_feasible(table)
        if count_cap < 1:
            raise ErrUsage("count cap must be at least 1")

        self.table = table
        self.constraints = constraints
        self.count_cap = count_cap
        self.budget = budget
        self.constraint_probability = constraint_probability(table, constraints)
        self.normalization = truncated_constraint_probability(table, constraints, count_cap)

        tail = sum(poisson_upper_tail_bound(rate, count_cap) for rate in table.rates)
        self.truncation_mass_bound = min(1.0, tail / self.constraint_probability)
        self._matrix = constraint_matrix(constraints)

    def log_probabilities(self, counts: np.ndarray) -> np.ndarray:
        counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
        if counts.shape[1] != self.table.size:
            raise ErrUsage(f"count vectors need {self.table.size} entries, got {counts.shape[1]}")

        rates = self.table.rates
        log_pmf = np.where(rates == 0, np.where(counts == 0, 0.0, -np.inf), stats.poisson.logpmf(counts, np.where(rates == 0, 1.0, rates)))
        total = log_pmf.sum(axis=1) - math.log(self.normalization)

        inside = np.all(counts <= self.count_cap, axis=1)
        satisfied = np.all(counts @ self._matrix.T > 0, axis=1) if self._matrix.shape[0] else np.ones(len(counts), dtype=bool)
        return np.where(inside & satisfied, total, -np.inf)

    def probability(self, counts: np.ndarray) -> float:
        return float(np.exp(self.log_probabilities(counts))[0])

    def support_size(self) -> int:
        return (self.count_cap + 1) ** self.table.size

    def enumerate(self, chunk: int = 1 << 16) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        """Yield ``(count vectors, probabilities)`` in chunks over the truncated support."""
        total = self.support_size()
        if total > self.budget:
            raise ErrResource(f"enumerating {total} count vectors exceeds the budget of {self.budget}")
        if total > self.budget // 2:
            logging.warning(f"Enumerating {total} count vectors (budget = {self.budget})")

        base = self.count_cap + 1
        powers = base ** np.arange(self.table.size - 1, -1, -1, dtype=np.int64)
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
            counts = (flat[:, None] // powers[None, :]) % base
            yield counts, np.exp(self.log_probabilities(counts))

    def as_mapping(self) -> Dict[Tuple[int, ...], float]:
        mapping: Dict[Tuple[int, ...], float] = dict()
        for counts, probabilities in self.enumerate():
            for row, probability in zip(counts[probabilities > 0], probabilities[probabilities > 0]):
                mapping[tuple(int(value) for value in row)] = float(probability)
        return mapping

    def marginal(self, code: int) -> np.ndarray:
        law = np.zeros(self.count_cap + 1)
        for counts, probabilities in self.enumerate():
            np.add.at(law, counts[:, code], probabilities)
        return law

    def tv_to_samples(self, samples: np.ndarray) -> float:
        """Plug-in TV between the empirical law of ``samples`` and this pmf."""
        samples = np.asarray(samples, dtype=np.int64)
        rows, frequencies = np.unique(samples, axis=0, return_counts=True)
        empirical = frequencies / len(samples)
        exact = np.exp(self.log_probabilities(rows))
        unobserved = max(0.0, 1.0 - float(exact.sum()))
        return 0.5 * (float(np.abs(empirical - exact).sum()) + unobserved)

    def null_tv(self, samples: np.ndarray, other_samples: int = 0) -> float:
        """Expected plug-in TV between this pmf and ``len(samples)`` draws from it.

        Each cell contributes the binomial mean absolute deviation ``2 (k+1) (1-p) Bin(k+1; N, p)``
        with ``k = floor(Np)``. The sum runs over the observed rows only, each weighted by the
        inverse of its probability of being observed, so no enumeration is needed. With
        ``other_samples`` the result is scaled to two independent samples.
        """
        samples = np.asarray(samples, dtype=np.int64)
        reps = len(samples)
        if reps < 1:
            raise ErrUsage("need at least one sample")

        rows = np.unique(samples, axis=0)
        p = np.exp(self.log_probabilities(rows))
        p = p[p > 0]
        k = np.floor(reps * p)
        deviation = 2 * (k + 1) * (1 - p) * stats.binom.pmf(k + 1, reps, p) / reps
        observed = -np.expm1(reps * np.log1p(-np.minimum(p, 1 - 1e-16)))
        value = 0.5 * float(np.sum(deviation / observed))
        if other_samples:
            value *= math.sqrt(1 + reps / other_samples)
        return value


def exact_conditional_pmf(table: RateTable,
                          constraints: ConstraintFamily,
                          count_cap: int = DEFAULT_COUNT_CAP,
                          budget: int = DEFAULT_ENUMERATION_BUDGET) -> ConditionalPmf:
    pmf = ConditionalPmf(table, constraints, count_cap, budget)
    logging.debug(f"Exact conditional pmf: P(C) = {pmf.constraint_probability:.6f}, truncation bound = {pmf.truncation_mass_bound:.3g}")
    return pmf


def anchor_distribution(table: RateTable,
                        constraints: ConstraintFamily,
                        count_cap: int = DEFAULT_COUNT_CAP,
                        budget: int = DEFAULT_ENUMERATION_BUDGET) -> Dict[BitIndex, float]:
    """Law of ``Y = max{x in M : N_x > 0}`` given ``C``, by enumeration of the exact pmf."""
    if constraints.is_empty():
        raise ErrUsage("the anchor is undefined without constraints")

    pmf = exact_conditional_pmf(table, constraints, count_cap, budget)
    relevant = constraints.relevant_mask()
    codes = np.arange(table.size)
    law = np.zeros(table.size)

    for counts, probabilities in pmf.enumerate():
        firing = (counts > 0) & relevant[None, :]
        keep = probabilities > 0
        anchors = np.max(np.where(firing, codes[None, :], -1), axis=1)
        np.add.at(law, anchors[keep], probabilities[keep])

    return {code_to_bits(code, table.n): float(law[code]) for code in codes if law[code] > 0}


def anchor_law(table: RateTable, constraints: ConstraintFamily) -> np.ndarray:
    """Closed-form law of the anchor over the codes of ``table`` (zero outside ``M``).

    ``P(Y = y, C) = prod_{x in M, x > y} e^{-l_x} (1 - e^{-l_y}) P(C^y)`` where ``C^y`` keeps
    the constraints ``y`` leaves unsatisfied, restricted to indices below ``y``.
    """
    if constraints.is_empty():
        raise ErrUsage("the anchor is undefined without constraints")
    constraints.check_feasible(table)

    rates = table.rates
    relevant = constraints.relevant_mask()
    matrix = constraint_matrix(constraints).astype(bool)
    unions, signs = _subset_unions(constraints)

    weighted = unions * rates[None, :]
    below = np.cumsum(weighted, axis=1) - weighted
    satisfied = np.zeros(table.size, dtype=np.int64)
    for bit in range(matrix.shape[0]):
        satisfied |= matrix[bit].astype(np.int64) << bit

    subsets = np.arange(unions.shape[0])
    admissible = (subsets[:, None] & satisfied[None, :]) == 0
    remaining = np.sum(np.where(admissible, signs[:, None] * np.exp(-below), 0.0), axis=0)

    relevant_rates = np.where(relevant, rates, 0.0)
    above = np.cumsum(relevant_rates[::-1])[::-1] - relevant_rates
    joint = np.where(relevant, np.exp(-above) * -np.expm1(-rates) * np.clip(remaining, 0.0, None), 0.0)

    total = joint.sum()
    if not total > 0:
        raise ErrDomain("constraints have probability zero")
    return joint / total


def multinomial_split(count: int, weights: np.ndarray, rng: np.random.Generator, tolerance: float = 1e-9) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if count < 0:
        raise ErrUsage(f"cannot split a negative count {count}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ErrDomain("multinomial weights must be finite and nonnegative")

    total = weights.sum()
    if total == 0:
        if count > 0:
            raise ErrDomain(f"cannot split {count} points over all-zero weights")
        return np.zeros(len(weights), dtype=np.int64)
    if abs(total - 1) > tolerance:
        raise ErrUsage(f"multinomial weights sum to {total}, expected 1")
    if count == 0:
        return np.zeros(len(weights), dtype=np.int64)

    return rng.multinomial(count, weights / total).astype(np.int64)


def rejection_conditional_samples(table: RateTable,
                                  constraints: ConstraintFamily,
                                  rng: np.random.Generator,
                                  count: int,
                                  max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Tuple[np.ndarray, int]:
    """``count`` exact draws from ``P(. | C)`` and the number of unconditioned draws used."""
    constraints.check_feasible(table)
    matrix = constraint_matrix(constraints)
    accepted: List[np.ndarray] = []
    have = 0
    attempts = 0

    while have < count:
        if attempts >= max_attempts:
            raise ErrResource(f"rejection sampler exhausted {max_attempts} attempts with {have} of {count} samples", acceptance_rate=have / max(1, attempts))

        batch = min(max_attempts - attempts, max(64, 2 * (count - have)))
        draws = rng.poisson(table.rates, size=(batch, table.size))
        attempts += batch
        keep = np.all(draws @ matrix.T > 0, axis=1) if matrix.shape[0] else np.ones(batch, dtype=bool)
        accepted.append(draws[keep])
        have += int(keep.sum())

    samples = np.concatenate(accepted)[:count]
    return samples, attempts


def rejection_conditional_sample(table: RateTable,
                                 constraints: ConstraintFamily,
                                 rng: np.random.Generator,
                                 max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> np.ndarray:
    constraints.check_feasible(table)
    matrix = constraint_matrix(constraints)

    for attempt in range(1, max_attempts + 1):
        draw = rng.poisson(table.rates)
        if matrix.shape[0] == 0 or np.all(matrix @ draw > 0):
            if attempt > 1:
                logging.debug(f"Rejection sampler accepted after {attempt} attempts")
            return draw.astype(np.int64)

    raise ErrResource(f"rejection sampler exhausted {max_attempts} attempts", acceptance_rate=0.0)


def empirical_law(samples: np.ndarray) -> Dict[Tuple[int, ...], float]:
    rows, frequencies = np.unique(np.asarray(samples, dtype=np.int64), axis=0, return_counts=True)
    return {tuple(int(value) for value in row): count / len(samples) for row, count in zip(rows, frequencies)}

