import numpy as np
import pytest

from rwrw_lab.errors import ErrUsage
from rwrw_lab.total_variation import (TVEstimate, bits_as_codes, rows_as_codes,
                                      tv_empirical)


def test_bernoulli_shift():
    rng = np.random.default_rng(0)
    p = (rng.uniform(size=200_000) < 0.3).astype(np.int64)
    q = (rng.uniform(size=200_000) < 0.4).astype(np.int64)
    estimate = tv_empirical(p, q, rng=rng, bootstrap=50)
    assert estimate.value == pytest.approx(0.1, abs=0.01)
    assert 0 < estimate.ci < 0.01
    assert estimate.feature_count == 2


def test_identical_samples():
    samples = np.array([[0, 1], [1, 1], [0, 1]])
    assert tv_empirical(samples, samples).value == 0.0


def test_disjoint_samples():
    assert tv_empirical(np.array([[0, 0]] * 3), np.array([[1, 1]] * 5)).value == pytest.approx(1.0)


def test_feature_maps():
    assert bits_as_codes(np.array([[1, 0, 1], [0, 1, 1]])).tolist() == [5, 3]
    assert rows_as_codes(np.array([[2, 2], [1, 0], [2, 2]])).tolist() == [1, 0, 1]
    estimate = tv_empirical(np.array([[1, 0]]), np.array([[0, 1]]), feature_map=bits_as_codes, feature_space="bits", feature_count=4)
    assert estimate.value == 1.0
    assert estimate.to_dict()["featureSpace"] == "bits"


def test_bias_bound():
    estimate = TVEstimate(0.1, 0.01, "rows", 16, 400)
    assert estimate.bias_bound == pytest.approx(0.2)


def test_empty_samples():
    with pytest.raises(ErrUsage):
        tv_empirical(np.zeros((0, 2)), np.zeros((3, 2)))
