"""Transition probabilities ``p_s(z)`` of lattice walks and their ``s^{-d/2}`` decay."""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from rwrw_lab.bridge import avoidance_probability
from rwrw_lab.environment import PathObservation
from rwrw_lab.errors import ErrUsage
from rwrw_lab.kernels import JumpKernel, LatticeVector

# Largest number of sites a full d-dimensional convolution may track.
FULL_CONVOLUTION_BUDGET = 2_000_000
DEFAULT_HEAT_KERNEL_SAMPLES = 200_000


def marginal_pmf(values: np.ndarray, weights: np.ndarray, s: int) -> Tuple[int, np.ndarray]:
    """The ``s``-fold convolution of a one-dimensional law, as (lowest value, pmf on consecutive integers)."""
    low, high = int(values.min()), int(values.max())
    dense = np.zeros(high - low + 1)
    np.add.at(dense, values.astype(np.int64) - low, weights)

    pmf = np.array([1.0])
    for _ in range(s):
        pmf = np.convolve(pmf, dense)
    return low * s, pmf


def full_pmf(kernel: JumpKernel, s: int) -> Dict[LatticeVector, float]:
    """``p_s`` by repeated convolution on Z^d; only for small supports."""
    pmf: Dict[LatticeVector, float] = {tuple([0] * kernel.d): 1.0}
    support = kernel.support()
    for _ in range(s):
        following: Dict[LatticeVector, float] = dict()
        for site, mass in pmf.items():
            for step, probability in support.items():
                target = tuple(a + b for a, b in zip(site, step))
                following[target] = following.get(target, 0.0) + mass * probability
        pmf = following
        if len(pmf) > FULL_CONVOLUTION_BUDGET:
            raise ErrUsage(f"full convolution exceeds {FULL_CONVOLUTION_BUDGET} sites")
    return pmf


def transition_probability(kernel: JumpKernel, s: int, z: Sequence[int]) -> float:
    """``p_s(z)``; for product kernels the product of per-coordinate probabilities."""
    if len(z) != kernel.d:
        raise ErrUsage(f"site {tuple(z)} does not live in dimension {kernel.d}")
    if kernel.is_coordinate_product:
        probability = 1.0
        for axis, coordinate in enumerate(z):
            low, pmf = marginal_pmf(*kernel.marginal(axis), s)
            index = int(coordinate) - low
            probability *= pmf[index] if 0 <= index < len(pmf) else 0.0
        return probability
    return full_pmf(kernel, s).get(tuple(int(value) for value in z), 0.0)


def sup_transition_probability(kernel: JumpKernel, s: int, rng: Optional[np.random.Generator] = None,
                               samples: int = DEFAULT_HEAT_KERNEL_SAMPLES) -> Tuple[float, bool]:
    """``sup_z p_s(z)`` and whether it is exact (``False``: Monte Carlo mode counting)."""
    if kernel.is_coordinate_product:
        return float(np.prod([marginal_pmf(*kernel.marginal(axis), s)[1].max() for axis in range(kernel.d)])), True

    estimated_sites = (2 * kernel.range * s + 1) ** kernel.d
    if estimated_sites <= FULL_CONVOLUTION_BUDGET:
        return max(full_pmf(kernel, s).values()), True

    if rng is None:
        raise ErrUsage("a Monte Carlo heat kernel needs a random generator")
    logging.warning(f"Kernel {kernel.name} is not a product and s = {s} is too large for exact convolution; counting modes")
    increments = kernel.sample(rng, samples * s).reshape(samples, s, kernel.d)
    _, frequencies = np.unique(increments.sum(axis=1), axis=0, return_counts=True)
    return float(frequencies.max() / samples), False


class HeatKernelReport:
    def __init__(self, s_grid: List[int], sup_values: np.ndarray, exact: bool, slope: float, slope_stderr: float,
                 avoidance_floor: Optional[float]) -> None:
        self.s_grid = s_grid
        self.sup_values = sup_values
        self.exact = exact
        self.slope = slope
        self.slope_stderr = slope_stderr
        self.avoidance_floor = avoidance_floor

    def slope_within(self, target: float, tolerance: float) -> bool:
        return abs(self.slope - target) <= tolerance


def heat_kernel_check(kernel: JumpKernel, d: int, s_grid: Sequence[int], rng: Optional[np.random.Generator] = None,
                      family: Sequence[PathObservation] = (), avoidance_samples: int = 20_000) -> HeatKernelReport:
    """``sup_z p_s(z)`` over ``s_grid``, the log-log slope, and the avoidance floor over ``family``."""
    if kernel.d != d:
        raise ErrUsage(f"kernel lives in dimension {kernel.d}, not {d}")
    s_grid = sorted(int(s) for s in s_grid)
    if not s_grid or s_grid[0] < 1:
        raise ErrUsage("the s grid needs positive entries")

    values = []
    exact = True
    for s in s_grid:
        value, is_exact = sup_transition_probability(kernel, s, rng)
        values.append(value)
        exact &= is_exact

    slope, stderr = 0.0, 0.0
    if len(s_grid) >= 2:
        fit = stats.linregress(np.log(s_grid), np.log(values))
        slope, stderr = float(fit.slope), float(fit.stderr)

    floor = None
    if family:
        if rng is None:
            raise ErrUsage("the avoidance floor needs a random generator")
        floor = avoidance_floor(kernel, family, avoidance_samples, rng)
    return HeatKernelReport(s_grid, np.asarray(values), exact, slope, stderr, floor)


def avoidance_floor(kernel: JumpKernel, family: Sequence[PathObservation], samples: int, rng: np.random.Generator) -> float:
    """Smallest probability, over the family, that a backward walk from ``(o, 0)`` misses the history."""
    origin_site = np.zeros(kernel.d, dtype=np.int64)
    floor = 1.0
    for history in family:
        probability, _ = avoidance_probability(kernel, origin_site, 0, history.points(), samples, rng)
        floor = min(floor, probability)
    return floor


def heat_kernel_exponent(d: int) -> float:
    return -d / 2


def product_identity_gap(kernel: JumpKernel, s: int, sites: Sequence[Sequence[int]]) -> float:
    """Largest difference between the product formula and full convolution at the given sites."""
    full = full_pmf(kernel, s)
    return max(abs(transition_probability(kernel, s, site) - full.get(tuple(site), 0.0)) for site in sites) if sites else 0.0


def envelope_constant(s_grid: Sequence[int], values: Sequence[float], d: int) -> float:
    return max(value * s ** (d / 2) for s, value in zip(s_grid, values)) if values else math.nan
