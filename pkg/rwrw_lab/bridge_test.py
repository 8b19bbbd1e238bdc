import numpy as np
import pytest
from scipy import stats

from rwrw_lab.bridge import (AnchoredSampler, RateEstimate,
                             anchored_spread_profile, avoidance_probability,
                             coupled_fields, cross_anchor_consistency,
                             dominates, estimate_lambda_future,
                             lambda_along_path, lambda_star, most_recent_hit,
                             qrs_split, rates_from_history, sample_QA_anchored,
                             trace_codes, vacant_mask)
from rwrw_lab.cond_poisson import count_fit_pvalue
from rwrw_lab.environment import (EnvConfig, ParticleField, PathObservation,
                                  observation_matches)
from rwrw_lab.errors import ErrUsage
from rwrw_lab.histories import exhaustive_family, future_family, history
from rwrw_lab.kernels import lazy_product, simple, stay
from rwrw_lab.occupancy import OccupancyOracle, lazy_reveal_step
from rwrw_lab.walker import WalkerConfig, run_quenched


def static_setup(density: float = 1.0):
    config = EnvConfig(1, density, stay(1), 3, past_depth=2)
    observed = PathObservation.from_increments([[0], [0]], [1, 1])
    return config, observed


def test_most_recent_hit():
    assert most_recent_hit(0b100, 3) == 1
    assert most_recent_hit(0b010, 3) == 2
    assert most_recent_hit(0b011, 3) == 2
    assert most_recent_hit(0b001, 3) == 3
    with pytest.raises(ErrUsage):
        most_recent_hit(0, 3)


def test_vacant_mask():
    observed = PathObservation.from_increments([[1], [1], [1]], [0, 1, 1])
    # Time -3 is bit position 3, the least significant bit of the code.
    assert vacant_mask(observed) == 0b001


def test_trace_codes_of_static_walks():
    config, observed = static_setup()
    trajectories = np.zeros((2, config.window_length, 1), dtype=np.int64)
    trajectories[1, 0] = 5
    assert trace_codes(trajectories, observed, config.start_time).tolist() == [0b11, 0b10]


def test_rates_for_static_environment():
    rng = np.random.default_rng(0)
    config, observed = static_setup(1.5)
    bridged = rates_from_history(observed, config, 200, rng)
    assert bridged.table.rates.tolist() == [0.0, 0.0, 0.0, 1.5]
    assert np.all(bridged.ci == 0)
    assert bridged.perturbed(-1).rates.tolist() == [0.0, 0.0, 0.0, 1.5]
    with pytest.raises(ErrUsage):
        bridged.perturbed(0)


def test_rates_are_zero_on_vacant_patterns():
    rng = np.random.default_rng(1)
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=3)
    observed = PathObservation.from_increments([[1], [0], [1]], [1, 0, 1])
    bridged = rates_from_history(observed, config, 2000, rng)
    forbidden = vacant_mask(observed)
    codes = np.arange(8)
    assert np.all(bridged.table.rates[(codes & forbidden) != 0] == 0)
    assert bridged.table.rates[0] == 0
    assert bridged.table.rates.sum() > 0


def test_rates_need_a_history():
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=1)
    with pytest.raises(ErrUsage):
        rates_from_history(PathObservation.empty(1), config, 10, np.random.default_rng(0))
    with pytest.raises(ErrUsage):
        rates_from_history(history("straight", "occupied", 1, 2), config, 10, np.random.default_rng(0))


def test_cross_anchor_estimates_agree():
    rng = np.random.default_rng(2)
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=3)
    observed = history("stationary", "occupied", 1, 3)
    assert cross_anchor_consistency(observed, config, 20_000, rng) < 5.0


def test_anchored_particles_reproduce_observation():
    rng = np.random.default_rng(3)
    config, observed = static_setup()
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config, 100, rng))
    for _ in range(20):
        field, anchored = sample_QA_anchored(observed, config, sampler, 1, rng)
        assert anchored.count >= 1
        assert set(anchored.patterns.tolist()) == {0b11}
        assert set(anchored.anchor_times.tolist()) == {-1}
        assert observation_matches(field, observed)
    assert sampler.acceptance_rates() == {"11": 1.0}
    assert anchored.format().startswith("bits=11 anchor=-1")


def test_sampler_without_occupied_points():
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=2)
    observed = history("straight", "vacant", 1, 2)
    rng = np.random.default_rng(4)
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config, 50, rng))
    assert sampler.plan is None
    assert sampler.sample(rng).count == 0


def test_avoidance_probability():
    rng = np.random.default_rng(5)
    assert avoidance_probability(simple(1), (0,), 0, [(1, (0,))], 10, rng) == (1.0, 10)
    assert avoidance_probability(stay(1), (0,), 2, [(0, (0,))], 10, rng) == (0.0, 0)
    # A simple walk from 0 is at +-1 after one backward step, never at 0.
    assert avoidance_probability(simple(1), (0,), 1, [(0, (0,))], 100, rng)[0] == 1.0


def test_lambda_future_and_sweep():
    rng = np.random.default_rng(6)
    config = EnvConfig(1, 2.0, lazy_product(1), 4, past_depth=2)
    empty_density = estimate_lambda_future(history("straight", "occupied", 1, 2), np.zeros((3, 1), dtype=np.int64), 0,
                                           config.with_density(0.0), 100, rng)
    assert empty_density.value == 0.0

    sweep = lambda_star([history("stationary", "occupied", 1, 2), history("straight", "vacant", 1, 2)],
                        future_family(1, 3), config, 2000, rng)
    assert 0 < sweep.estimate.value < 2.0
    assert sweep.estimate.value == min(row[3].value for row in sweep.table)
    assert len(sweep.table) == 2 * 3 * 3
    with pytest.raises(ErrUsage):
        estimate_lambda_future(history("straight", "occupied", 1, 2), np.zeros((3, 1), dtype=np.int64), 3, config, 10, rng)


def test_rate_estimate_from_successes():
    estimate = RateEstimate.from_successes(2.0, 50, 100)
    assert estimate.value == pytest.approx(1.0)
    assert estimate.ci == pytest.approx(1.959963984540054 * 2.0 * 0.05)


def test_qrs_split_accounts_for_new_particles():
    rng = np.random.default_rng(7)
    config = EnvConfig(1, 1.5, lazy_product(1), 6)
    oracle = OccupancyOracle.lazy(config, rng)
    for t in range(6):
        lazy_reveal_step(oracle, (0,), t, rng, q_fraction=0.3)
    recorded = qrs_split(oracle.records, rng)
    assert recorded.q.tolist() == [record.q for record in oracle.records]

    thinned = qrs_split(oracle.records, rng, 0.5, [1.5] * 6)
    assert np.all(thinned.q + thinned.r == [record.survivors for record in oracle.records])
    with pytest.raises(ErrUsage):
        qrs_split(oracle.records, rng, 0.5)


def test_anchored_spread_profile_shape():
    rng = np.random.default_rng(8)
    config = EnvConfig(1, 1.0, lazy_product(1), 8, past_depth=2)
    observed = history("stationary", "occupied", 1, 2)
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config, 2000, rng))
    profile = anchored_spread_profile(sampler, [1, 2, 4, 8], 200, rng)
    assert len(profile.values) == 4
    assert np.all(profile.values > 0)


def test_lambda_star_sweeps_exhaustive_paths():
    rng = np.random.default_rng(9)
    config = EnvConfig(1, 1.0, lazy_product(1), 3, past_depth=2)
    family = [history("straight", "occupied", 1, 2)] + exhaustive_family(1, 2, [(-1,), (0,), (1,)])
    sweep = lambda_star(family, future_family(1, 3), config, 500, rng)
    assert len(sweep.table) == len(family) * 3 * 3
    assert {row[0] for row in sweep.table} >= {"path2.0-occupied", "path1.2-occupied"}
    assert sweep.estimate.value == min(row[3].value for row in sweep.table)


def test_conditioned_field_dominates_the_avoiding_field():
    rng = np.random.default_rng(10)
    config = EnvConfig(1, 1.0, lazy_product(1), 2, past_depth=2)
    observed = history("stationary", "occupied", 1, 2)
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config, 2000, rng))
    points = [(t, (x,)) for t in range(config.start_time, config.horizon + 1) for x in range(-3, 4)]
    strict = 0
    for _ in range(200):
        avoiding, conditioned, anchored = coupled_fields(observed, config, sampler, 3, rng)
        assert dominates(conditioned, avoiding, points)
        strict += anchored.count > 0
    assert strict == 200
    assert not dominates(ParticleField.empty(1, config.start_time, config.horizon), conditioned, points)


def test_new_particles_split_into_independent_poisson_parts():
    rng = np.random.default_rng(11)
    config = EnvConfig(1, 2.0, lazy_product(1), 2, past_depth=2)
    observed = history("stationary", "occupied", 1, 2)
    rate = estimate_lambda_future(observed, np.zeros((1, 1), dtype=np.int64), 0, config, 400_000, rng).value
    records = [lazy_reveal_step(OccupancyOracle.lazy(config, rng, history=observed), (0,), 0, rng) for _ in range(10_000)]
    split = qrs_split(records, rng, 0.3, [rate] * len(records))

    assert count_fit_pvalue(split.q + split.r, stats.poisson(rate)) > 1e-3
    assert count_fit_pvalue(split.q, stats.poisson(0.3)) > 1e-3
    assert count_fit_pvalue(split.r, stats.poisson(rate - 0.3)) > 1e-3
    assert abs(np.corrcoef(split.q, split.r)[0, 1]) < 4 / np.sqrt(len(records))


def test_thinning_along_the_walker_path_gives_q_at_lambda_star():
    rng = np.random.default_rng(12)
    config = EnvConfig(1, 2.0, lazy_product(1), 4, past_depth=2)
    observed = history("stationary", "occupied", 1, 2)
    walker = WalkerConfig(lazy_product(1), simple(1))
    runs = []
    for _ in range(300):
        oracle = OccupancyOracle.lazy(config, rng, history=observed)
        run_quenched(oracle, walker, config.horizon, rng)
        runs.append((oracle.records, lambda_along_path(observed, oracle.records, config, 20_000, rng)))

    estimates = [estimate for _, along in runs for estimate in along]
    lowest = min(estimate.value for estimate in estimates)
    relative = max(estimate.ci / estimate.value for estimate in estimates if estimate.value > 0)
    q = np.concatenate([qrs_split(records, rng, lowest, [estimate.value for estimate in along]).q for records, along in runs])
    assert 0 < lowest < 2.0
    assert abs(q.mean() - lowest) <= 4 * np.sqrt(lowest / q.size) + lowest * relative

    with pytest.raises(ErrUsage):
        lambda_along_path(observed, runs[0][0][1:], config, 10, rng)
