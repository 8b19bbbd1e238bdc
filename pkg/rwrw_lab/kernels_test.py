import numpy as np
import pytest

from rwrw_lab.errors import ErrDomain, ErrUsage
from rwrw_lab.kernels import (JumpKernel, dirac, drift, format_kernel,
                              lazy_product, parse_kernel, range_set, simple,
                              stay)


def test_lazy_product_support_and_moments():
    kernel = lazy_product(2)
    assert len(kernel.steps) == 9
    assert kernel.probability_of((0, 0)) == pytest.approx(0.25)
    assert kernel.probability_of((1, -1)) == pytest.approx(1 / 16)
    assert np.allclose(kernel.mean(), [0, 0])
    assert np.allclose(kernel.covariance(), np.eye(2) * 0.5)
    assert kernel.is_truly_d_dimensional()
    assert kernel.is_coordinate_product
    assert kernel.range == 1


def test_simple_and_stay():
    assert simple(3).probability_of((0, 0, -1)) == pytest.approx(1 / 6)
    assert stay(2).support() == {(0, 0): 1.0}
    assert not stay(2).is_truly_d_dimensional()


def test_drift_mean():
    kernel = drift(2, 0.7)
    assert kernel.mean()[0] == pytest.approx(0.4)
    assert kernel.mean()[1] == pytest.approx(0.0)
    with pytest.raises(ErrDomain):
        drift(1, 1.5)


def test_unnormalized_kernel_is_rejected():
    with pytest.raises(ErrDomain, match="not normalized"):
        JumpKernel([[1], [-1]], [0.5, 0.4])
    with pytest.raises(ErrDomain):
        JumpKernel([[1], [-1]], [1.5, -0.5])
    with pytest.raises(ErrUsage):
        JumpKernel([[1], [-1]], [1.0])


def test_duplicate_steps_are_merged():
    kernel = JumpKernel([[1], [1], [0]], [0.25, 0.25, 0.5])
    assert kernel.support() == {(0,): 0.5, (1,): 0.5}


def test_sample_stays_in_support():
    rng = np.random.default_rng(1)
    kernel = parse_kernel("1,0:0.5; 0,2:0.5", 2)
    increments = kernel.sample(rng, 1000)
    assert increments.shape == (1000, 2)
    assert all(kernel.probability_of(step) > 0 for step in increments)
    assert 400 < int(np.sum(increments[:, 0] == 1)) < 600


def test_parse_kernel_variants():
    assert parse_kernel("lazy", 1) == lazy_product(1)
    assert parse_kernel("dirac:1,-1", 2) == dirac((1, -1))
    assert parse_kernel(" simple ", 2) == simple(2)
    with pytest.raises(ErrUsage):
        parse_kernel("dirac:1", 2)
    with pytest.raises(ErrUsage):
        parse_kernel("drift:abc", 1)
    with pytest.raises(ErrUsage):
        parse_kernel("nonsense", 1)


def test_format_kernel_parses_back():
    for text in ["lazy", "drift:0.7", "dirac:0,1"]:
        assert format_kernel(parse_kernel(text, 2)) == text
    table = parse_kernel("1,0:0.25; -1,0:0.75", 2)
    assert parse_kernel(format_kernel(table), 2) == table


def test_reversed_and_marginal():
    kernel = drift(1, 0.7).reversed()
    assert kernel.probability_of((-1,)) == pytest.approx(0.7)
    values, weights = lazy_product(2).marginal(1)
    assert values.tolist() == [-1, 0, 1]
    assert np.allclose(weights, [0.25, 0.5, 0.25])


def test_log_mgf_and_projection():
    kernel = simple(1)
    assert kernel.log_mgf(np.array([0.0])) == pytest.approx(0.0)
    assert kernel.log_mgf(np.array([1.0])) == pytest.approx(np.log(np.cosh(1.0)))
    values, weights = lazy_product(2).projected([1, 1])
    assert values.tolist() == [-2, -1, 0, 1, 2]
    assert weights.sum() == pytest.approx(1.0)


def test_range_set_is_union():
    assert range_set(dirac((1,)), dirac((-1,)), stay(1)) == [(-1,), (0,), (1,)]
