import numpy as np
import pytest

from rwrw_lab.bit_index import ConstraintFamily, RateTable, bits_to_code
from rwrw_lab.cond_poisson import (exact_conditional_pmf,
                                   rejection_conditional_samples)
from rwrw_lab.decomposition import (TERMINATED, DecompositionPlan, LevelState,
                                    anchors_decrease, coarsen, decompose,
                                    decompose_many, initial_level, lift_point,
                                    sample_anchor_path)
from rwrw_lab.errors import ErrUsage
from rwrw_lab.total_variation import tv_empirical


def test_coarsen_partitions_the_cube():
    table = RateTable.uniform(3, 1.0)
    level = initial_level(table, ConstraintFamily(3, [1, 2, 3]))
    assert level.k == 1
    assert level.width == 3

    following = coarsen(level, (1, 1, 0))
    assert isinstance(following, LevelState)
    assert following.k == 2
    assert following.active == frozenset([3])
    assert following.width == 1
    # Codes below 110 inside M: 001, 011, 101 end in 1; 010, 100 end in 0
    assert following.rates.rates.tolist() == [2.0, 3.0]
    assert sorted(following.chain.base_preimages[2][1].tolist()) == [1, 3, 5]


def test_coarsen_terminates_when_every_constraint_is_met():
    level = initial_level(RateTable.uniform(2, 1.0), ConstraintFamily(2, [1, 2]))
    assert coarsen(level, (1, 1)) is TERMINATED


def test_coarsen_rejects_bad_anchor():
    level = initial_level(RateTable.uniform(2, 1.0), ConstraintFamily(2, [1, 2]))
    with pytest.raises(ErrUsage):
        coarsen(level, (0, 1))
    with pytest.raises(ErrUsage):
        coarsen(level, (1,))


def test_initial_projection_drops_leading_positions():
    level = initial_level(RateTable.uniform(3, 1.0), ConstraintFamily(3, [2]))
    assert level.width == 2
    # Positions 2..3 of the codes in M = {x : x(2) = 1}
    assert level.rates.rates.tolist() == [0.0, 0.0, 2.0, 2.0]


def test_lift_proportional_to_rates():
    rng = np.random.default_rng(11)
    table = RateTable(3, [0.0, 1.0, 2.0, 1.0, 3.0, 1.0, 1.0, 1.0])
    level = coarsen(initial_level(table, ConstraintFamily(3, [1, 2, 3])), (1, 1, 0))
    chain = level.chain

    draws = [bits_to_code(lift_point((1,), 2, chain, table, rng)) for _ in range(20_000)]
    frequencies = np.bincount(draws, minlength=8) / len(draws)
    # Preimage of 1 at level 2: codes 1, 3, 5 with rates 1, 1, 1
    assert frequencies[[1, 3, 5]] == pytest.approx([1 / 3, 1 / 3, 1 / 3], abs=0.02)
    assert frequencies[[0, 2, 4, 6, 7]].sum() == 0

    staged = [bits_to_code(lift_point((0,), 2, chain, table, rng, staged=True)) for _ in range(20_000)]
    frequencies = np.bincount(staged, minlength=8) / len(staged)
    # Preimage of 0 at level 2: codes 2, 4 with rates 2, 3
    assert frequencies[[2, 4]] == pytest.approx([0.4, 0.6], abs=0.02)


def test_lift_rejects_levels_outside_the_chain():
    table = RateTable.uniform(2, 1.0)
    level = initial_level(table, ConstraintFamily(2, [1, 2]))
    with pytest.raises(ErrUsage):
        lift_point((1, 1), 3, level.chain, table, np.random.default_rng(0))


def test_decompose_without_constraints():
    rng = np.random.default_rng(5)
    sample = decompose(RateTable.uniform(2, 1.0), ConstraintFamily(2, []), rng)
    assert sample.kappa == 0
    assert sample.anchors == []


def test_decompose_invariants():
    rng = np.random.default_rng(5)
    table = RateTable.uniform(3, 0.4)
    constraints = ConstraintFamily(3, [1, 2, 3])
    plan = DecompositionPlan(table, constraints)
    for _ in range(500):
        for mode in ("exact-conditional", "dominating"):
            sample = decompose(table, constraints, rng, mode, plan)
            assert sample.kappa <= 3
            assert constraints.satisfied_by(sample.counts)
            assert anchors_decrease(sample)
            if mode == "dominating":
                assert len(sample.lifted_extras) == sample.kappa * plan.domination_shift()


def test_decompose_unknown_mode():
    with pytest.raises(ErrUsage):
        decompose(RateTable.uniform(1, 1.0), ConstraintFamily(1, [1]), np.random.default_rng(0), "approximate")


def test_decompose_law_matches_exact_pmf():
    rng = np.random.default_rng(2024)
    table = RateTable.uniform(2, 1.0)
    constraints = ConstraintFamily(2, [1, 2])
    samples, kappas = decompose_many(table, constraints, rng, 100_000)

    pmf = exact_conditional_pmf(table, constraints)
    excess = pmf.tv_to_samples(samples) - pmf.null_tv(samples)
    assert excess < 0.01
    assert kappas.max() <= 2

    rejected, _ = rejection_conditional_samples(table, constraints, rng, 100_000)
    pairwise = tv_empirical(samples, rejected).value - pmf.null_tv(samples, len(rejected))
    assert pairwise < 0.015


def test_anchor_path_levels_increase():
    rng = np.random.default_rng(9)
    plan = DecompositionPlan(RateTable.uniform(3, 1.0), ConstraintFamily(3, [1, 2, 3]))
    for _ in range(200):
        steps = sample_anchor_path(plan, rng)
        assert 1 <= len(steps) <= 3
        assert [state.k for _, state, _ in steps] == list(range(1, len(steps) + 1))


def test_dominating_mode_survival_dominates_the_conditional_law():
    rng = np.random.default_rng(31)
    table = RateTable(2, [0.3, 1.0, 0.5, 2.0])
    constraints = ConstraintFamily(2, [1, 2])
    exact, _ = decompose_many(table, constraints, rng, 20_000)
    dominating, _ = decompose_many(table, constraints, rng, 20_000, "dominating")

    columns = [(dominating[:, code], exact[:, code]) for code in range(table.size)]
    for upper, lower in columns + [(dominating.sum(axis=1), exact.sum(axis=1))]:
        for k in range(1, int(max(upper.max(), lower.max())) + 1):
            assert (lower >= k).mean() - (upper >= k).mean() <= 0.02
    assert dominating.sum(axis=1).mean() > exact.sum(axis=1).mean()


def test_decompose_with_mixed_and_zero_rates_on_three_bits():
    rng = np.random.default_rng(32)
    table = RateTable(3, [0.5, 0.0, 1.5, 0.2, 0.0, 1.0, 2.0, 0.7])
    constraints = ConstraintFamily(3, [1, 3])
    samples, kappas = decompose_many(table, constraints, rng, 60_000)

    assert np.all(samples[:, table.rates == 0] == 0)
    assert kappas.max() <= 2
    pmf = exact_conditional_pmf(table, constraints)
    assert pmf.tv_to_samples(samples) - pmf.null_tv(samples) < 0.02
