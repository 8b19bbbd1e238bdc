import math

import numpy as np
import pytest

from rwrw_lab.environment import EnvConfig
from rwrw_lab.errors import ErrUsage
from rwrw_lab.estimators import (VarianceCurve, anticoncentration_profile,
                                 bahadur_rao_rate, batch_means_ci, cramer_rate,
                                 dyadic_times, estimate_speed, fclt_report,
                                 ldb_curve, sample_positions, variance_curve)
from rwrw_lab.kernels import drift, lazy_product, simple
from rwrw_lab.parallel import ReplicaPool
from rwrw_lab.walker import WalkerConfig


def empty_env(d: int = 1, horizon: int = 10) -> EnvConfig:
    return EnvConfig(d, 0.0, lazy_product(d), horizon)


def test_dyadic_times():
    assert dyadic_times(10) == [1, 2, 4, 8, 10]
    assert dyadic_times(8) == [1, 2, 4, 8]


def test_batch_means_ci():
    values = np.arange(100, dtype=float).reshape(100, 1)
    mean, half_width = batch_means_ci(values, batches=10)
    assert mean.tolist() == [49.5]
    assert half_width[0] > 0


def test_speed_of_drifting_walk_in_empty_field():
    walker = WalkerConfig(drift(1, 0.7), drift(1, 0.7))
    speed = estimate_speed(empty_env(), walker, 256, 2000, np.random.default_rng(0))
    assert speed.v_hat[0] == pytest.approx(0.4, abs=0.01)
    assert speed.ci[0] < 0.01
    assert speed.cauchy_check()
    assert sorted(speed.partials) == [1, 2, 4, 8, 16, 32, 64, 128, 256]


def test_speed_between_the_two_drifts():
    config = EnvConfig(1, 0.5, lazy_product(1), 64)
    walker = WalkerConfig(drift(1, 0.7), drift(1, 0.3))
    speed = estimate_speed(config, walker, 64, 100, ReplicaPool(3, blocks=4))
    assert -0.4 - speed.ci[0] <= speed.v_hat[0] <= 0.4 + speed.ci[0]
    assert speed.to_dict()["reps"] == 100


def test_speed_validation():
    with pytest.raises(ErrUsage):
        estimate_speed(empty_env(), WalkerConfig(simple(1), simple(1)), 0, 10, np.random.default_rng(0))


def test_sample_positions_are_seeded_by_blocks():
    walker = WalkerConfig(simple(1), simple(1))
    first = sample_positions(ReplicaPool(9, blocks=3), empty_env(), walker, [5], 30)
    second = sample_positions(ReplicaPool(9, blocks=3), empty_env(), walker, [5], 30)
    assert np.array_equal(first, second)
    assert first.shape == (30, 1, 1)


def test_cramer_rate_of_simple_walk():
    level = 0.5
    expected = (1 + level) / 2 * math.log(1 + level) + (1 - level) / 2 * math.log(1 - level)
    assert cramer_rate(simple(1), level) == pytest.approx(expected, abs=1e-6)
    assert cramer_rate(simple(1), 0.0) == pytest.approx(0.0, abs=1e-9)
    assert cramer_rate(simple(1), 1.5) == math.inf


def test_bahadur_rao_rate_exceeds_cramer_rate():
    cramer = cramer_rate(simple(1), 0.5)
    finite = bahadur_rao_rate(simple(1), 0.0, 0.5, 100)
    assert cramer < finite < cramer + 0.03


def test_ldb_curve_in_empty_field():
    walker = WalkerConfig(simple(1), simple(1))
    curve = ldb_curve(empty_env(), walker, 0.3, [10, 20, 40], 4000, np.random.default_rng(1), v_hat=np.zeros(1))
    assert not curve.censored.any()
    assert np.all(curve.rates > 0)
    assert curve.cramer == pytest.approx(cramer_rate(simple(1), 0.3), abs=1e-9)
    assert curve.rate_at(40) > curve.rate_at(10) * 0.5
    with pytest.raises(ErrUsage):
        ldb_curve(empty_env(), walker, 0.0, [10], 10, np.random.default_rng(1))


def test_ldb_curve_censors_rare_events():
    walker = WalkerConfig(simple(1), simple(1))
    curve = ldb_curve(empty_env(), walker, 0.9, [30], 200, np.random.default_rng(2), v_hat=np.zeros(1))
    assert curve.censored.tolist() == [True]
    assert math.isnan(curve.rates[0])


def test_variance_grows_linearly_in_empty_field():
    walker = WalkerConfig(simple(1), simple(1))
    curve = variance_curve(empty_env(), walker, [1.0], [8, 16, 32], 4000, np.random.default_rng(3))
    assert curve.variances == pytest.approx([8, 16, 32], rel=0.1)
    assert curve.strictly_increasing()
    assert curve.doubling_ratio() == pytest.approx(2.0, rel=0.15)
    assert curve.anticoncentration is not None
    with pytest.raises(ErrUsage):
        variance_curve(empty_env(), walker, [0.0], [8], 10, np.random.default_rng(3))


def test_anticoncentration_profile():
    positions = np.zeros((4, 2, 1), dtype=np.int64)
    positions[:, 1, 0] = [0, 1, 2, 3]
    profile = anticoncentration_profile(positions, [1, 4], 0.5)
    assert profile.ball_probability.tolist() == [1.0, 0.5]
    assert profile.sup_mass_scaled.tolist() == [1.0, 0.5]
    assert profile.below_envelope()


def test_fclt_report_of_lazy_walk():
    walker = WalkerConfig(lazy_product(1), lazy_product(1))
    report = fclt_report(empty_env(horizon=64), walker, 64, 2000, np.random.default_rng(4), v_hat=np.zeros(1))
    assert report.positive_definite
    assert report.sigma_hat[0, 0] == pytest.approx(0.5, abs=0.05)
    assert report.ks_band() == pytest.approx(1.3581 / math.sqrt(2000), rel=1e-3)
    assert set(report.ks) == {0.25, 0.5, 1.0}
    with pytest.raises(ErrUsage):
        fclt_report(empty_env(), walker, 32, 10, np.random.default_rng(4))


def test_variance_increase_allows_for_sampling_error():
    def curve(variances, ci):
        return VarianceCurve([4, 8, 16], np.array(variances), np.array(ci), np.ones(1), None)

    assert curve([4.0, 3.9, 9.0], [0.3, 0.3, 0.6]).strictly_increasing()
    assert not curve([4.0, 2.0, 9.0], [0.3, 0.3, 0.6]).strictly_increasing()
    assert not curve([4.0, 4.2, 4.4], [0.3, 0.3, 0.3]).strictly_increasing()


def test_anticoncentration_envelope_is_fitted_on_all_but_the_last_point():
    positions = np.zeros((4, 3, 1), dtype=np.int64)
    positions[:, 0, 0] = [0, 2, 4, 6]
    positions[:, 2, 0] = [0, 3, 6, 9]
    profile = anticoncentration_profile(positions, [1, 4, 9], 0.5)
    assert profile.ball_probability.tolist() == [0.0, 1.0, 0.0]
    assert profile.envelope_constant == pytest.approx(1.0)
    assert profile.below_envelope()
