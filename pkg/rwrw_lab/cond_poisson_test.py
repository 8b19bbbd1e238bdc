import math

import numpy as np
import pytest
from scipy import stats

from rwrw_lab.bit_index import ConstraintFamily, RateTable
from rwrw_lab.cond_poisson import (anchor_distribution, anchor_law,
                                   constraint_probability, count_fit_pvalue,
                                   enumerable_count_cap, exact_conditional_pmf,
                                   min_domination_shift, multinomial_split,
                                   rejection_conditional_sample,
                                   rejection_conditional_samples,
                                   sample_zero_truncated_poisson)
from rwrw_lab.errors import ErrDomain, ErrResource, ErrUsage


def test_constraint_probability():
    table = RateTable.uniform(2, 1.0)
    p = constraint_probability(table, ConstraintFamily(2, [1, 2]))
    assert p == pytest.approx(1 - 2 * math.exp(-2) + math.exp(-3), abs=1e-12)
    assert p == pytest.approx(0.779116, abs=1e-6)

    assert constraint_probability(table, ConstraintFamily(2, [])) == 1.0
    assert constraint_probability(table, ConstraintFamily(2, [1])) == pytest.approx(1 - math.exp(-2))


def test_exact_pmf_agrees_with_inclusion_exclusion():
    table = RateTable.uniform(2, 1.0)
    pmf = exact_conditional_pmf(table, ConstraintFamily(2, [1, 2]), count_cap=10)
    total = sum(probability for probability in pmf.as_mapping().values())
    assert total == pytest.approx(1.0, abs=1e-12)
    assert pmf.truncation_mass_bound < 1e-6

    # Every count vector with mass satisfies both constraints
    for counts in pmf.as_mapping():
        assert counts[2] + counts[3] > 0
        assert counts[1] + counts[3] > 0


def test_exact_pmf_budget():
    pmf = exact_conditional_pmf(RateTable.uniform(3, 1.0), ConstraintFamily(3, [1]), count_cap=8, budget=1000)
    with pytest.raises(ErrResource):
        pmf.as_mapping()


def test_anchor_distribution():
    table = RateTable.from_mapping(2, {(1, 0): 1.0, (1, 1): 1.0})
    law = anchor_distribution(table, ConstraintFamily(2, [1]), count_cap=12)
    expected = (1 - math.exp(-1)) / (1 - math.exp(-2))
    assert law[(1, 1)] == pytest.approx(expected, abs=1e-6)
    assert law[(1, 1)] == pytest.approx(0.731059, abs=1e-6)
    assert law[(1, 0)] == pytest.approx(1 - expected, abs=1e-6)

    with pytest.raises(ErrUsage):
        anchor_distribution(table, ConstraintFamily(2, []))


def test_anchor_law_matches_enumeration():
    table = RateTable(2, [0.3, 1.0, 0.5, 2.0])
    constraints = ConstraintFamily(2, [1, 2])
    closed_form = anchor_law(table, constraints)
    enumerated = anchor_distribution(table, constraints, count_cap=14)

    for code, probability in enumerate(closed_form):
        bits = ((code >> 1) & 1, code & 1)
        assert probability == pytest.approx(enumerated.get(bits, 0.0), abs=1e-6)


def test_min_domination_shift():
    assert min_domination_shift(1.0) == 1
    assert min_domination_shift(0.1) == 1
    assert min_domination_shift(4.0) >= 1

    with pytest.raises(ErrDomain):
        min_domination_shift(0.0)


def test_zero_truncated_poisson():
    rng = np.random.default_rng(42)
    draws = sample_zero_truncated_poisson(0.5, 100_000, rng)
    assert draws.min() >= 1
    expected_mean = 0.5 / -math.expm1(-0.5)
    assert draws.mean() == pytest.approx(expected_mean, abs=0.01)

    with pytest.raises(ErrDomain):
        sample_zero_truncated_poisson(0.0, 1, rng)


def test_multinomial_split():
    rng = np.random.default_rng(7)
    split = multinomial_split(10, np.array([0.25, 0.75]), rng)
    assert split.sum() == 10

    assert multinomial_split(0, np.zeros(3), rng).tolist() == [0, 0, 0]
    with pytest.raises(ErrDomain):
        multinomial_split(2, np.zeros(3), rng)
    with pytest.raises(ErrUsage):
        multinomial_split(2, np.array([0.5, 0.4]), rng)


def test_rejection_sampler():
    rng = np.random.default_rng(1)
    table = RateTable.uniform(2, 1.0)
    constraints = ConstraintFamily(2, [1, 2])
    samples, attempts = rejection_conditional_samples(table, constraints, rng, 50_000)

    assert samples.shape == (50_000, 4)
    assert np.all(samples[:, 2] + samples[:, 3] > 0)
    assert np.all(samples[:, 1] + samples[:, 3] > 0)

    p = constraint_probability(table, constraints)
    acceptance = len(samples) / attempts
    assert abs(acceptance - p) <= 4 * math.sqrt(p * (1 - p) / attempts) + 1e-3


def test_rejection_sampler_budget():
    rng = np.random.default_rng(1)
    table = RateTable.uniform(3, 0.01)
    with pytest.raises(ErrResource) as error:
        rejection_conditional_samples(table, ConstraintFamily(3, [1, 2, 3]), rng, 100, max_attempts=200)
    assert error.value.acceptance_rate is not None


def test_pmf_tv_to_own_samples_is_small():
    rng = np.random.default_rng(3)
    table = RateTable.uniform(2, 1.0)
    constraints = ConstraintFamily(2, [1, 2])
    pmf = exact_conditional_pmf(table, constraints)
    samples, _ = rejection_conditional_samples(table, constraints, rng, 200_000)
    raw = pmf.tv_to_samples(samples)
    null = pmf.null_tv(samples)
    assert 0 < null < 0.05
    assert raw - null < 0.008


class SaturatedUniforms:
    def uniform(self, size):
        return np.ones(size)


def test_zero_truncated_poisson_at_the_top_uniform():
    draws = sample_zero_truncated_poisson(0.5, 4, SaturatedUniforms())
    assert draws.dtype == np.int64
    assert draws.min() >= 1
    assert draws.max() < 100


def test_multinomial_split_thins_a_poisson_count():
    rng = np.random.default_rng(11)
    weights = np.array([0.2, 0.5, 0.3])
    totals = rng.poisson(3.0, size=20_000)
    parts = np.array([multinomial_split(int(total), weights, rng) for total in totals])

    assert np.all(parts.sum(axis=1) == totals)
    for column, weight in enumerate(weights):
        assert count_fit_pvalue(parts[:, column], stats.poisson(3.0 * weight)) > 1e-3
    correlation = np.corrcoef(parts[:, 0], parts[:, 1])[0, 1]
    assert abs(correlation) < 4 / np.sqrt(len(totals))


def test_single_draw_rejection_matches_exact_law():
    rng = np.random.default_rng(12)
    table = RateTable(2, [0.3, 1.0, 0.5, 2.0])
    constraints = ConstraintFamily(2, [1, 2])
    draws = np.array([rejection_conditional_sample(table, constraints, rng) for _ in range(20_000)])

    assert np.all(draws[:, 2] + draws[:, 3] > 0)
    assert np.all(draws[:, 1] + draws[:, 3] > 0)
    pmf = exact_conditional_pmf(table, constraints)
    assert pmf.tv_to_samples(draws) - pmf.null_tv(draws) < 0.01

    with pytest.raises(ErrResource):
        rejection_conditional_sample(RateTable.uniform(3, 0.01), ConstraintFamily(3, [1, 2, 3]), rng, max_attempts=5)


def test_count_fit_pvalue():
    rng = np.random.default_rng(13)
    assert count_fit_pvalue(rng.poisson(1.5, size=20_000), stats.poisson(1.5)) > 1e-3
    assert count_fit_pvalue(rng.poisson(1.8, size=20_000), stats.poisson(1.5)) < 1e-6
    assert count_fit_pvalue(sample_zero_truncated_poisson(0.7, 20_000, rng), stats.poisson(0.7), start=1) > 1e-3
    assert count_fit_pvalue(np.ones(3, dtype=np.int64), stats.poisson(1.0)) == 1.0


def test_enumerable_count_cap():
    assert enumerable_count_cap(8, 2_000_000) == 5
    assert enumerable_count_cap(4, 6561) == 8
    assert enumerable_count_cap(8, 100) == 0
    assert enumerable_count_cap(1, 0) == -1
    with pytest.raises(ErrUsage):
        enumerable_count_cap(0, 10)


def test_anchor_distribution_at_the_largest_enumerable_cap():
    table = RateTable.uniform(3, 1.0)
    constraints = ConstraintFamily(3, [1, 3])
    budget = 500_000
    cap = min(8, enumerable_count_cap(table.size, budget))
    assert cap == 4
    law = anchor_distribution(table, constraints, cap, budget)
    bound = exact_conditional_pmf(table, constraints, cap, budget).truncation_mass_bound
    closed_form = anchor_law(table, constraints)
    for bits, probability in law.items():
        code = int("".join(str(bit) for bit in bits), 2)
        assert abs(closed_form[code] - probability) <= bound + 1e-9

    with pytest.raises(ErrResource):
        anchor_distribution(table, constraints, 8, budget)
