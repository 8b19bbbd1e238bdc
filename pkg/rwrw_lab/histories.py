"""Finite adversarial families of observed histories and future paths.

Suprema over all admissible histories are replaced by maxima (or minima) over these
families: straight, staircase and stationary paths with all-occupied, all-vacant and
alternating observation bits, plus exhaustive enumeration of short paths.
"""

import itertools
import logging
from typing import Callable, Dict, List, Sequence

import numpy as np

from rwrw_lab.constants import ADVERSARIAL_ENUMERATION_BUDGET
from rwrw_lab.environment import PathObservation
from rwrw_lab.errors import ErrUsage
from rwrw_lab.kernels import LatticeVector, origin, unit_vector

SIGMA_PATTERNS: Dict[str, Callable[[int], List[int]]] = {
    "occupied": lambda length: [1] * length,
    "vacant": lambda length: [0] * length,
    "alternating": lambda length: [(length - index) % 2 for index in range(length)],
}


def shape_increments(shape: str, d: int, length: int) -> List[LatticeVector]:
    if shape == "straight":
        return [unit_vector(d, 0)] * length
    if shape == "staircase":
        if d < 2:
            return [unit_vector(d, 0)] * length
        return [unit_vector(d, index % 2) for index in range(length)]
    if shape == "stationary":
        return [origin(d)] * length
    raise ErrUsage(f"unknown path shape [{shape}]")


def history(shape: str, sigma_pattern: str, d: int, length: int) -> PathObservation:
    if sigma_pattern not in SIGMA_PATTERNS:
        raise ErrUsage(f"unknown observation pattern [{sigma_pattern}]")
    if length == 0:
        return PathObservation.empty(d)
    increments = shape_increments(shape, d, length)
    return PathObservation.from_increments(increments, SIGMA_PATTERNS[sigma_pattern](length), name=f"{shape}-{sigma_pattern}-{length}")


def adversarial_family(d: int, max_length: int, range_steps: Sequence[Sequence[int]],
                       shapes: Sequence[str] = ("straight", "staircase", "stationary"),
                       sigma_patterns: Sequence[str] = ("occupied", "vacant", "alternating"),
                       lengths: Sequence[int] = ()) -> List[PathObservation]:
    """Histories admissible for the walker range set, one per (shape, bits, length)."""
    family: List[PathObservation] = []
    for length in (lengths or range(1, max_length + 1)):
        for shape in shapes:
            for sigma_pattern in sigma_patterns:
                candidate = history(shape, sigma_pattern, d, length)
                if candidate.is_admissible(range_steps) and all(candidate.name != other.name for other in family):
                    family.append(candidate)

    if not family:
        raise ErrUsage("no admissible history in the adversarial family; the walker range set excludes every shape")
    return family


def exhaustive_paths(d: int, length: int, range_steps: Sequence[Sequence[int]],
                     budget: int = ADVERSARIAL_ENUMERATION_BUDGET) -> List[np.ndarray]:
    """Every backward path of the given length with increments in the range set."""
    steps = [tuple(int(value) for value in step) for step in range_steps]
    total = len(steps) ** length
    if total > budget:
        logging.warning(f"{total} paths of length {length} exceed the enumeration budget {budget}; enumerating none")
        return []

    paths = []
    for increments in itertools.product(steps, repeat=length):
        paths.append(PathObservation.from_increments(np.asarray(increments).reshape(length, d), [0] * length).positions)
    return paths


def exhaustive_family(d: int, max_length: int, range_steps: Sequence[Sequence[int]], sigma: str = "occupied",
                      budget: int = ADVERSARIAL_ENUMERATION_BUDGET) -> List[PathObservation]:
    family = []
    for length in range(1, max_length + 1):
        for index, positions in enumerate(exhaustive_paths(d, length, range_steps, budget)):
            family.append(PathObservation(positions, SIGMA_PATTERNS[sigma](length), name=f"path{length}.{index}-{sigma}"))
    return family


def future_path(shape: str, d: int, length: int) -> np.ndarray:
    """Walker positions at times ``0 .. length-1`` starting at the origin."""
    increments = np.asarray(shape_increments(shape, d, max(0, length - 1)), dtype=np.int64).reshape(-1, d)
    return np.vstack([np.zeros((1, d), dtype=np.int64), np.cumsum(increments, axis=0)])


def future_family(d: int, length: int) -> Dict[str, np.ndarray]:
    return {shape: future_path(shape, d, length) for shape in ("straight", "staircase", "stationary")}
