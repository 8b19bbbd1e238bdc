import numpy as np
import pytest

from rwrw_lab.errors import ErrUsage
from rwrw_lab.heat_kernel import (avoidance_floor, envelope_constant,
                                  full_pmf, heat_kernel_check,
                                  heat_kernel_exponent, marginal_pmf,
                                  product_identity_gap,
                                  sup_transition_probability,
                                  transition_probability)
from rwrw_lab.histories import history
from rwrw_lab.kernels import lazy_product, parse_kernel, simple


def test_lazy_walk_two_steps():
    low, pmf = marginal_pmf(np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]), 2)
    assert low == -2
    assert pmf.tolist() == pytest.approx([1 / 16, 4 / 16, 6 / 16, 4 / 16, 1 / 16])
    assert sup_transition_probability(lazy_product(1), 2) == (pytest.approx(0.375), True)
    assert transition_probability(lazy_product(2), 2, (0, 0)) == pytest.approx(0.375 ** 2)
    assert transition_probability(lazy_product(1), 2, (3,)) == 0.0


def test_product_formula_matches_full_convolution():
    sites = [(0, 0), (1, -1), (2, 2), (0, 3)]
    assert product_identity_gap(lazy_product(2), 3, sites) < 1e-12


def test_non_product_kernel():
    assert not simple(2).is_coordinate_product
    assert sup_transition_probability(simple(2), 2) == (pytest.approx(0.25), True)
    assert sum(full_pmf(simple(2), 3).values()) == pytest.approx(1.0)
    with pytest.raises(ErrUsage):
        transition_probability(simple(2), 1, (0,))


def test_slope_matches_dimension():
    report = heat_kernel_check(lazy_product(1), 1, [16, 64, 256])
    assert report.exact
    assert report.slope_within(heat_kernel_exponent(1), 0.05)
    assert report.avoidance_floor is None
    assert envelope_constant(report.s_grid, report.sup_values, 1) == pytest.approx(max(report.sup_values * np.sqrt(report.s_grid)))


def test_monte_carlo_mode_for_large_non_product_kernels():
    kernel = parse_kernel("2,0:0.5; -2,1:0.25; 0,-2:0.25", 2)
    value, exact = sup_transition_probability(kernel, 400, np.random.default_rng(0), samples=2000)
    assert not exact
    assert 0 < value < 1
    with pytest.raises(ErrUsage):
        sup_transition_probability(kernel, 400)


def test_avoidance_floor():
    rng = np.random.default_rng(1)
    family = [history("stationary", "occupied", 1, 2)]
    floor = avoidance_floor(simple(1), family, 20_000, rng)
    assert floor == pytest.approx(0.5, abs=0.02)
    report = heat_kernel_check(simple(1), 1, [2, 4], rng, family=family, avoidance_samples=5000)
    assert 0.45 < report.avoidance_floor < 0.55


def test_heat_kernel_check_validation():
    with pytest.raises(ErrUsage):
        heat_kernel_check(lazy_product(1), 2, [1])
    with pytest.raises(ErrUsage):
        heat_kernel_check(lazy_product(1), 1, [0, 2])
