"""Finite-range jump kernels on Z^d."""

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from rwrw_lab.constants import KERNEL_NORMALIZATION_TOLERANCE
from rwrw_lab.errors import ErrDomain, ErrUsage

LatticeVector = Tuple[int, ...]
# A one-dimensional factor: integer steps and their probabilities.
Factor = Tuple[np.ndarray, np.ndarray]


def unit_vector(d: int, coordinate: int, sign: int = 1) -> LatticeVector:
    return tuple(sign if index == coordinate else 0 for index in range(d))


def origin(d: int) -> LatticeVector:
    return tuple([0] * d)


class JumpKernel:
    def __init__(self, steps: Sequence[Sequence[int]], probabilities: Sequence[float], name: str = "",
                 factors: Optional[List[Factor]] = None) -> None:
        steps_array = np.asarray(steps, dtype=np.int64)
        probabilities_array = np.asarray(probabilities, dtype=float)

        if steps_array.ndim != 2 or steps_array.shape[0] == 0:
            raise ErrUsage("a kernel needs a nonempty (steps, d) support")
        if steps_array.shape[0] != probabilities_array.shape[0]:
            raise ErrUsage(f"{steps_array.shape[0]} steps but {probabilities_array.shape[0]} probabilities")
        if np.any(probabilities_array < 0) or not np.all(np.isfinite(probabilities_array)):
            raise ErrDomain(f"kernel [{name}] has negative or non-finite probabilities")
        total = probabilities_array.sum()
        if abs(total - 1.0) > KERNEL_NORMALIZATION_TOLERANCE:
            raise ErrDomain(f"kernel [{name}] is not normalized: probabilities sum to {total!r}")

        merged: Dict[LatticeVector, float] = dict()
        for step, probability in zip(steps_array, probabilities_array):
            if probability > 0:
                key = tuple(int(value) for value in step)
                merged[key] = merged.get(key, 0.0) + float(probability)

        self.d = steps_array.shape[1]
        self.name = name
        self.steps = np.array(sorted(merged), dtype=np.int64)
        self.probabilities = np.array([merged[tuple(step)] for step in self.steps.tolist()])
        self.factors = factors
        self._support = {tuple(step): float(probability) for step, probability in zip(self.steps.tolist(), self.probabilities)}

    @property
    def is_coordinate_product(self) -> bool:
        return self.factors is not None

    @property
    def range(self) -> int:
        return int(np.abs(self.steps).max())

    def support(self) -> Dict[LatticeVector, float]:
        return dict(self._support)

    def probability_of(self, step: Sequence[int]) -> float:
        return self._support.get(tuple(int(value) for value in step), 0.0)

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.steps

    def covariance(self) -> np.ndarray:
        centered = self.steps - self.mean()
        return (centered * self.probabilities[:, None]).T @ centered

    def is_truly_d_dimensional(self) -> bool:
        eigenvalues = np.linalg.eigvalsh(self.covariance())
        return bool(eigenvalues.min() > 1e-12)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent increments as a ``(size, d)`` integer array."""
        if self.factors is not None:
            columns = [values[rng.choice(len(values), size=size, p=weights)] for values, weights in self.factors]
            return np.stack(columns, axis=1).astype(np.int64)
        picks = rng.choice(len(self.steps), size=size, p=self.probabilities)
        return self.steps[picks]

    def reversed(self) -> 'JumpKernel':
        factors = None
        if self.factors is not None:
            factors = [(-values, weights) for values, weights in self.factors]
        return JumpKernel(-self.steps, self.probabilities, name=f"reversed({self.name})", factors=factors)

    def marginal(self, coordinate: int) -> Factor:
        """Law of one coordinate of an increment, as (sorted values, probabilities)."""
        if self.factors is not None:
            values, weights = self.factors[coordinate]
            order = np.argsort(values)
            return values[order], weights[order]
        values, inverse = np.unique(self.steps[:, coordinate], return_inverse=True)
        weights = np.zeros(len(values))
        np.add.at(weights, inverse, self.probabilities)
        return values, weights

    def log_mgf(self, theta: np.ndarray) -> float:
        exponents = self.steps @ np.asarray(theta, dtype=float)
        top = exponents.max()
        return float(top + np.log(np.sum(self.probabilities * np.exp(exponents - top))))

    def projected(self, direction: Sequence[float]) -> Factor:
        """Law of ``direction . W`` for an increment ``W``."""
        values = self.steps @ np.asarray(direction, dtype=float)
        unique, inverse = np.unique(values, return_inverse=True)
        weights = np.zeros(len(unique))
        np.add.at(weights, inverse, self.probabilities)
        return unique, weights

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JumpKernel):
            return NotImplemented
        return self.support() == other.support()

    def __repr__(self) -> str:
        return f"JumpKernel({self.name}, d={self.d}, |support|={len(self.steps)})"


def product_kernel(factors: List[Factor], name: str) -> JumpKernel:
    factors = [(np.asarray(values, dtype=np.int64), np.asarray(weights, dtype=float)) for values, weights in factors]
    steps = []
    probabilities = []
    for combination in itertools.product(*[range(len(values)) for values, _ in factors]):
        steps.append([int(factors[axis][0][index]) for axis, index in enumerate(combination)])
        probabilities.append(float(np.prod([factors[axis][1][index] for axis, index in enumerate(combination)])))
    return JumpKernel(steps, probabilities, name=name, factors=factors)


def lazy_product(d: int) -> JumpKernel:
    """Each coordinate independently stays w.p. 1/2 or moves by +-1 w.p. 1/4 each."""
    _check_dimension(d)
    factor = (np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
    return product_kernel([factor] * d, name="lazy")


def simple(d: int) -> JumpKernel:
    _check_dimension(d)
    steps = [unit_vector(d, axis, sign) for axis in range(d) for sign in (1, -1)]
    return JumpKernel(steps, [1 / (2 * d)] * (2 * d), name="simple")


def stay(d: int) -> JumpKernel:
    _check_dimension(d)
    factor = (np.array([0]), np.array([1.0]))
    return product_kernel([factor] * d, name="stay")


def dirac(vector: Sequence[int]) -> JumpKernel:
    _check_dimension(len(vector))
    factors = [(np.array([int(value)]), np.array([1.0])) for value in vector]
    return product_kernel(factors, name="dirac:" + ",".join(str(int(value)) for value in vector))


def drift(d: int, p_plus: float) -> JumpKernel:
    """+e_1 w.p. ``p_plus``, -e_1 otherwise; the remaining coordinates are lazy-symmetric."""
    _check_dimension(d)
    if not 0 <= p_plus <= 1:
        raise ErrDomain(f"drift probability {p_plus} outside [0, 1]")
    first = (np.array([-1, 1]), np.array([1 - p_plus, p_plus]))
    lazy = (np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
    return product_kernel([first] + [lazy] * (d - 1), name=f"drift:{p_plus!r}")


def from_table(entries: Sequence[Tuple[Sequence[int], float]], name: str = "table") -> JumpKernel:
    return JumpKernel([step for step, _ in entries], [probability for _, probability in entries], name=name)


def parse_kernel(text: str, d: int) -> JumpKernel:
    """``lazy``, ``simple``, ``stay``, ``dirac:<v>``, ``drift:<p>`` or ``v1,..,vd:p; ...``."""
    text = text.strip()
    if text == "lazy":
        return lazy_product(d)
    if text == "simple":
        return simple(d)
    if text == "stay":
        return stay(d)
    if text.startswith("dirac:"):
        vector = _parse_vector(text[len("dirac:"):], d)
        return dirac(vector)
    if text.startswith("drift:"):
        try:
            p_plus = float(text[len("drift:"):])
        except ValueError:
            raise ErrUsage(f"bad drift probability in [{text}]")
        return drift(d, p_plus)

    entries = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ErrUsage(f"kernel entry [{item}] is not of the form v1,..,vd:p")
        vector_text, probability_text = item.split(":", 1)
        try:
            probability = float(probability_text)
        except ValueError:
            raise ErrUsage(f"bad probability in kernel entry [{item}]")
        entries.append((_parse_vector(vector_text, d), probability))

    if not entries:
        raise ErrUsage(f"unknown kernel [{text}]")
    return from_table(entries, name=text)


def format_kernel(kernel: JumpKernel) -> str:
    if kernel.name in ("lazy", "simple", "stay") or kernel.name.startswith(("dirac:", "drift:")):
        return kernel.name
    return "; ".join(",".join(str(value) for value in step) + f":{probability!r}" for step, probability in kernel.support().items())


def range_set(*kernels: JumpKernel) -> List[LatticeVector]:
    steps = set()
    for kernel in kernels:
        steps.update(kernel.support().keys())
    return sorted(steps)


def _parse_vector(text: str, d: int) -> LatticeVector:
    try:
        vector = tuple(int(value) for value in text.split(","))
    except ValueError:
        raise ErrUsage(f"bad lattice vector [{text}]")
    if len(vector) != d:
        raise ErrUsage(f"lattice vector [{text}] does not have {d} coordinates")
    return vector


def _check_dimension(d: int):
    if d < 1:
        raise ErrUsage(f"dimension must be at least 1, got {d}")
