import numpy as np
import pytest
from scipy import stats

from rwrw_lab.bridge import AnchoredSampler, rates_from_history
from rwrw_lab.cond_poisson import count_fit_pvalue
from rwrw_lab.environment import EnvConfig
from rwrw_lab.errors import ErrDomain, ErrUsage
from rwrw_lab.histories import history
from rwrw_lab.kernels import lazy_product, simple
from rwrw_lab.mixing import (PhiBound, block_failure_probability,
                             block_length_for, coupled_run, fixed_path_mixing,
                             path_site, phi_curve_shape, phi_upper_curve,
                             sample_q_block)
from rwrw_lab.total_variation import TVEstimate
from rwrw_lab.walker import WalkerConfig


def setup(density: float, horizon: int = 8):
    config = EnvConfig(1, density, lazy_product(1), horizon, past_depth=2)
    observed = history("stationary", "occupied", 1, 2)
    rng = np.random.default_rng(0)
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config.with_density(1.0), 500, rng))
    return config, observed, sampler


def test_block_failure_probability():
    assert block_failure_probability(0.5, 2, 2) == pytest.approx(0.75)
    assert block_failure_probability(1.0, 10, 3) == pytest.approx(0.0)
    assert block_failure_probability(0.0, 10, 3) == pytest.approx(1.0)
    assert block_failure_probability(0.9, 2, 3) == 1.0
    assert block_failure_probability(0.3, 5, 0) == 0.0
    assert block_failure_probability(0.5, 200, 3) < block_failure_probability(0.5, 100, 3)


def test_block_length_for():
    assert block_length_for(10) == 5
    assert block_length_for(1) == 2
    assert block_length_for(1000, constant=1.0) == 7


def test_q_block_is_positive():
    block = sample_q_block(0.2, 1000, np.random.default_rng(1))
    assert np.all(block >= 1)


def test_q_block_follows_the_zero_truncated_law():
    block = sample_q_block(1.3, 20_000, np.random.default_rng(2))
    assert count_fit_pvalue(block, stats.poisson(1.3), start=1) > 1e-3
    assert count_fit_pvalue(block + 1, stats.poisson(1.3), start=1) < 1e-6


def test_path_site():
    assert path_site("straight", 2, 3).tolist() == [3, 0]
    assert path_site("straight", 2, -2).tolist() == [-2, 0]
    assert path_site("stationary", 1, -4).tolist() == [0]


def test_empty_field_never_decouples():
    config, observed, _ = setup(0.0)
    walker = WalkerConfig(simple(1), lazy_product(1))
    sampler = AnchoredSampler(observed, config, rates_from_history(observed, config.with_density(1.0), 10, np.random.default_rng(0)))
    outcome = coupled_run(observed, config, walker, sampler, 0.0, 3, 3, np.random.default_rng(1))
    assert not outcome.failed
    assert outcome.xi_agree
    assert outcome.to_dict()["tau"] == "inf"


def test_forced_q_keeps_walkers_together_on_the_block():
    config, observed, sampler = setup(1.0)
    walker = WalkerConfig(simple(1), lazy_product(1))
    rng = np.random.default_rng(2)
    for _ in range(30):
        outcome = coupled_run(observed, config, walker, sampler, 0.3, 3, 3, rng, future_samples=64)
        assert outcome.conditioned_on_q
        assert outcome.tau is None or outcome.tau > 3


def test_coupled_run_validation():
    config, observed, sampler = setup(1.0, horizon=4)
    walker = WalkerConfig(simple(1), lazy_product(1))
    with pytest.raises(ErrUsage):
        coupled_run(observed, config, walker, sampler, 0.3, 3, 3, np.random.default_rng(0))
    with pytest.raises(ErrUsage):
        coupled_run(observed, config, walker, sampler, 0.3, 0, 3, np.random.default_rng(0))


def test_phi_curve_in_empty_field():
    config, observed, sampler = setup(0.0)
    walker = WalkerConfig(simple(1), lazy_product(1))
    bounds = phi_upper_curve([observed], config, walker, {observed.name: sampler}, 0.0, [2, 4], 2, 10, np.random.default_rng(0))
    assert [bound.assembled for bound in bounds] == [0.0, 0.0]
    assert bounds[0].csv_row("family", 2) == [2, 0.0, 0.0, 2, "family"]


def test_fixed_path_mixing():
    config = EnvConfig(1, 0.5, lazy_product(1), 6, past_depth=1)
    result = fixed_path_mixing(config, "stationary", 1, [1, 1], [1, 2, 3], 2, 300, np.random.default_rng(3))
    assert len(result.estimates) == 3
    assert all(0 <= estimate.value <= 1 for estimate in result.estimates)
    assert 0 < result.acceptance_rate <= 1
    assert result.envelope_exponent == pytest.approx(1.5)
    first, second, _ = [estimate.value for estimate in result.estimates]
    assert result.envelope_constant == pytest.approx(max(first, second * 2 ** -1.5))


def test_fixed_path_mixing_validation():
    config = EnvConfig(1, 0.5, lazy_product(1), 6, past_depth=1)
    rng = np.random.default_rng(0)
    with pytest.raises(ErrUsage):
        fixed_path_mixing(config, "stationary", 1, [1], [1], 2, 10, rng)
    with pytest.raises(ErrUsage):
        fixed_path_mixing(config, "stationary", 1, [1, 1], [1], 9, 10, rng)
    with pytest.raises(ErrUsage):
        fixed_path_mixing(config, "stationary", 1, [1, 1], [6], 2, 10, rng)
    with pytest.raises(ErrDomain):
        fixed_path_mixing(config.with_density(0.0), "stationary", 1, [1, 1], [1], 2, 10, rng)


def test_phi_curve_shape():
    def bounds(values, ci):
        return [PhiBound(t, 2, TVEstimate(value, width, "Z", 4, 100), 0.0, value, ("a", "b"))
                for t, value, width in zip([32, 8, 16], values, ci)]

    assert phi_curve_shape(bounds([0.1, 0.5, 0.3], [0.02, 0.02, 0.02])) == (True, True)
    assert phi_curve_shape(bounds([0.3, 0.5, 0.36], [0.05, 0.05, 0.05])) == (True, False)
    assert phi_curve_shape(bounds([0.2, 0.5, 0.6], [0.02, 0.02, 0.02])) == (False, True)
    assert phi_curve_shape(bounds([0.1], [0.0])) == (True, False)
