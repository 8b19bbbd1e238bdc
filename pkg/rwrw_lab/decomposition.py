"""Iterative anchor / coarsen / split / lift decomposition of a conditioned Poisson vector.

Level ``k`` lives on ``{0,1}^{offset..n}`` where ``offset = min`` of the still unsatisfied
constraint positions. Level 1 is obtained from the base space by projecting the constraint
relevant indices ``M`` onto ``{0,1}^{min(O)..n}``; with ``min(O) = 1`` this projection is the
identity on ``M``. Every level keeps, for each of its indices, the base indices and the
previous-level indices it was grouped from, so points can be lifted back.
"""

import logging
from typing import Dict, FrozenSet, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from rwrw_lab.bit_index import (BitIndex, ConstraintFamily, RateTable,
                                bits_to_code, code_to_bits, format_bits)
from rwrw_lab.cond_poisson import (anchor_law, min_domination_shift,
                                   multinomial_split,
                                   sample_zero_truncated_poisson)
from rwrw_lab.constants import MASS_CONSERVATION_TOLERANCE
from rwrw_lab.errors import ErrInvariant, ErrUsage

Mode = Literal["exact-conditional", "dominating"]
MODES: Tuple[str, ...] = ("exact-conditional", "dominating")


class ProjectionChain:
    def __init__(self, base: RateTable) -> None:
        self.base_n = base.n
        # Index 0 is the base space; index k is level k.
        self.level_rates: List[np.ndarray] = [base.rates]
        self.base_preimages: List[List[np.ndarray]] = [[np.array([code]) for code in range(base.size)]]
        self.parent_preimages: List[List[np.ndarray]] = [[np.array([code]) for code in range(base.size)]]

    def extended(self, rates: np.ndarray, base_preimages: List[np.ndarray], parent_preimages: List[np.ndarray]) -> 'ProjectionChain':
        chain = ProjectionChain.__new__(ProjectionChain)
        chain.base_n = self.base_n
        chain.level_rates = self.level_rates + [rates]
        chain.base_preimages = self.base_preimages + [base_preimages]
        chain.parent_preimages = self.parent_preimages + [parent_preimages]
        return chain

    @property
    def depth(self) -> int:
        return len(self.level_rates) - 1


class LevelState:
    def __init__(self, k: int, offset: int, active: FrozenSet[int], rates: RateTable, chain: ProjectionChain) -> None:
        if not active:
            raise ErrInvariant("a level needs at least one outstanding constraint")

        self.k = k
        self.offset = offset
        self.active = active
        self.rates = rates
        self.chain = chain

    @property
    def width(self) -> int:
        return self.rates.n

    def local_constraints(self) -> ConstraintFamily:
        return ConstraintFamily(self.width, [position - self.offset + 1 for position in self.active])

    def bit_at(self, bits: Sequence[int], position: int) -> int:
        return int(bits[position - self.offset])


class Terminated:
    def __repr__(self) -> str:
        return "Terminated"


TERMINATED = Terminated()


def _project(codes: np.ndarray, rates: np.ndarray, width: int,
             base_preimages: List[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
    """Group ``codes`` by their last ``width`` bits; sum rates and merge preimages."""
    size = 1 << width
    images = codes & (size - 1)
    projected = np.zeros(size)
    np.add.at(projected, images, rates[codes])

    merged_base: List[np.ndarray] = []
    merged_parent: List[np.ndarray] = []
    for image in range(size):
        members = codes[images == image]
        merged_parent.append(members)
        if len(members):
            merged_base.append(np.concatenate([base_preimages[member] for member in members]))
        else:
            merged_base.append(np.zeros(0, dtype=np.int64))

    return projected, merged_base, merged_parent


def initial_level(table: RateTable, constraints: ConstraintFamily) -> LevelState:
    if constraints.is_empty():
        raise ErrUsage("no level structure without constraints")
    constraints.check_feasible(table)

    chain = ProjectionChain(table)
    offset = min(constraints.positions)
    width = table.n - offset + 1
    relevant_codes = np.flatnonzero(constraints.relevant_mask())
    rates, base_preimages, parent_preimages = _project(relevant_codes, table.rates, width, chain.base_preimages[0])

    return LevelState(1, offset, constraints.positions, RateTable(width, rates), chain.extended(rates, base_preimages, parent_preimages))


def coarsen(state: LevelState, y: Sequence[int]) -> Union[LevelState, Terminated]:
    if len(y) != state.width:
        raise ErrUsage(f"anchor {format_bits(y)} does not live on the level-{state.k} space of width {state.width}")

    first = min(state.active)
    if state.bit_at(y, first) != 1:
        raise ErrUsage(f"anchor {format_bits(y)} does not satisfy the first outstanding constraint (position {first})")

    remaining = frozenset(position for position in state.active if state.bit_at(y, position) == 0)
    if not remaining:
        return TERMINATED

    codes = np.arange(state.rates.size)
    relevant = state.local_constraints().relevant_mask()
    domain = codes[relevant & (codes < bits_to_code(y))]

    offset = min(remaining)
    width = state.chain.base_n - offset + 1
    rates, base_preimages, parent_preimages = _project(domain, state.rates.rates, width, state.chain.base_preimages[state.k])

    expected = float(state.rates.rates[domain].sum())
    if abs(rates.sum() - expected) > MASS_CONSERVATION_TOLERANCE * max(1.0, expected):
        raise ErrInvariant(f"coarsening lost mass: {rates.sum()} != {expected}")

    chain = state.chain.extended(rates, base_preimages, parent_preimages)
    return LevelState(state.k + 1, offset, remaining, RateTable(width, rates), chain)


def lift_point(y: Sequence[int], level: int, chain: ProjectionChain, base: RateTable,
               rng: np.random.Generator, staged: bool = False) -> BitIndex:
    """Lift a level-``level`` index to the base space, proportionally to base rates.

    With ``staged`` the lift walks down one level at a time using each level's rates;
    the resulting law is the same.
    """
    if level == 0:
        return tuple(int(bit) for bit in y)
    if not 1 <= level <= chain.depth:
        raise ErrUsage(f"level {level} is not in the chain (depth {chain.depth})")

    code = bits_to_code(y)
    if chain.level_rates[level][code] <= 0:
        raise ErrUsage(f"cannot lift {format_bits(y)}: its level-{level} rate is zero")

    if not staged:
        preimage = chain.base_preimages[level][code]
        return code_to_bits(int(_choose(preimage, base.rates[preimage], rng)), chain.base_n)

    for current_level in range(level, 0, -1):
        parents = chain.parent_preimages[current_level][code]
        code = int(_choose(parents, chain.level_rates[current_level - 1][parents], rng))
    return code_to_bits(code, chain.base_n)


def _choose(candidates: np.ndarray, weights: np.ndarray, rng: np.random.Generator) -> int:
    if len(candidates) == 0:
        raise ErrInvariant("empty preimage while lifting")
    total = weights.sum()
    if not total > 0:
        raise ErrInvariant("preimage carries no rate")
    return candidates[rng.choice(len(candidates), p=weights / total)]


class LevelAnchor:
    def __init__(self, level: int, offset: int, bits: BitIndex) -> None:
        self.level = level
        self.offset = offset
        self.bits = bits

    def to_dict(self) -> Dict[str, object]:
        return {"level": self.level, "offset": self.offset, "bits": format_bits(self.bits)}


class DecompositionSample:
    def __init__(self, n: int, anchors: List[LevelAnchor], lifted_extras: List[BitIndex], counts: np.ndarray) -> None:
        self.n = n
        self.anchors = anchors
        self.lifted_extras = lifted_extras
        self.counts = counts

    @property
    def kappa(self) -> int:
        return len(self.anchors)

    def counts_mapping(self) -> Dict[BitIndex, int]:
        return {code_to_bits(code, self.n): int(count) for code, count in enumerate(self.counts) if count}

    def to_dict(self) -> Dict[str, object]:
        return {
            "kappa": self.kappa,
            "anchors": [anchor.to_dict() for anchor in self.anchors],
            "liftedExtras": [format_bits(bits) for bits in self.lifted_extras],
            "counts": {format_bits(bits): count for bits, count in self.counts_mapping().items()}
        }


class DecompositionPlan:
    """Caches level states and anchor laws by the anchor path that produced them."""

    def __init__(self, table: RateTable, constraints: ConstraintFamily) -> None:
        constraints.check_feasible(table)
        self.table = table
        self.constraints = constraints
        self.relevant = constraints.relevant_mask()
        self._states: Dict[Tuple[int, ...], Union[LevelState, Terminated]] = dict()
        self._laws: Dict[Tuple[int, ...], np.ndarray] = dict()
        self._shift: Optional[int] = None

    def state(self, path: Tuple[int, ...]) -> Union[LevelState, Terminated]:
        if path not in self._states:
            if not path:
                self._states[path] = initial_level(self.table, self.constraints)
            else:
                parent = self.state(path[:-1])
                if not isinstance(parent, LevelState):
                    raise ErrInvariant("anchor path continues past termination")
                self._states[path] = coarsen(parent, code_to_bits(path[-1], parent.width))
        return self._states[path]

    def law(self, path: Tuple[int, ...]) -> np.ndarray:
        if path not in self._laws:
            state = self.state(path)
            if not isinstance(state, LevelState):
                raise ErrInvariant("no anchor law at a terminated level")
            self._laws[path] = anchor_law(state.rates, state.local_constraints())
        return self._laws[path]

    def domination_shift(self) -> int:
        if self._shift is None:
            self._shift = min_domination_shift(self.table.max_rate())
            logging.debug(f"Domination shift n({self.table.max_rate()}) = {self._shift}")
        return self._shift


def _lift_counts(counts: np.ndarray, level_counts: np.ndarray, level: int, chain: ProjectionChain,
                 base: RateTable, rng: np.random.Generator):
    for code in np.flatnonzero(level_counts):
        preimage = chain.base_preimages[level][code]
        weights = base.rates[preimage]
        split = multinomial_split(int(level_counts[code]), weights / weights.sum(), rng)
        np.add.at(counts, preimage, split)


def sample_anchor_path(plan: DecompositionPlan, rng: np.random.Generator) -> List[Tuple[Tuple[int, ...], LevelState, int]]:
    """Sample anchors level by level; returns ``(path before the anchor, level state, anchor code)``."""
    steps: List[Tuple[Tuple[int, ...], LevelState, int]] = []
    path: Tuple[int, ...] = ()

    while True:
        state = plan.state(path)
        if not isinstance(state, LevelState):
            return steps
        law = plan.law(path)
        code = int(rng.choice(len(law), p=law))
        steps.append((path, state, code))
        path = path + (code,)


def decompose(table: RateTable, constraints: ConstraintFamily, rng: np.random.Generator,
              mode: Mode = "exact-conditional", plan: Optional[DecompositionPlan] = None) -> DecompositionSample:
    if mode not in MODES:
        raise ErrUsage(f"unknown decomposition mode [{mode}], expected one of {MODES}")
    constraints.check_feasible(table)

    if constraints.is_empty():
        return DecompositionSample(table.n, [], [], rng.poisson(table.rates).astype(np.int64))

    plan = plan or DecompositionPlan(table, constraints)
    steps = sample_anchor_path(plan, rng)
    anchors = [LevelAnchor(state.k, state.offset, code_to_bits(code, state.width)) for _, state, code in steps]

    if len(anchors) > len(constraints.positions):
        raise ErrInvariant(f"{len(anchors)} anchors for {len(constraints.positions)} constraints")

    if mode == "dominating":
        sample = _dominating_counts(table, plan, steps, anchors, rng)
    else:
        sample = _exact_counts(table, plan, steps, anchors, rng)

    if not constraints.satisfied_by(sample.counts):
        raise ErrInvariant(f"decomposition produced counts violating the constraints: {sample.counts_mapping()}")
    return sample


def _exact_counts(table: RateTable, plan: DecompositionPlan, steps: List[Tuple[Tuple[int, ...], LevelState, int]],
                  anchors: List[LevelAnchor], rng: np.random.Generator) -> DecompositionSample:
    counts = np.zeros(table.size, dtype=np.int64)
    outside = ~plan.relevant
    counts[outside] = rng.poisson(table.rates[outside])

    for index, (path, state, anchor_code) in enumerate(steps):
        rates = state.rates.rates
        codes = np.arange(len(rates))
        relevant = state.local_constraints().relevant_mask()
        level_counts = np.zeros(len(rates), dtype=np.int64)

        level_counts[~relevant] = rng.poisson(rates[~relevant])
        level_counts[anchor_code] = sample_zero_truncated_poisson(float(rates[anchor_code]), 1, rng)[0]

        if index == len(steps) - 1:
            # Last level: no outstanding constraints below the anchor.
            below = relevant & (codes < anchor_code)
            level_counts[below] = rng.poisson(rates[below])

        _lift_counts(counts, level_counts, state.k, state.chain, table, rng)

    return DecompositionSample(table.n, anchors, [], counts)


def _dominating_counts(table: RateTable, plan: DecompositionPlan, steps: List[Tuple[Tuple[int, ...], LevelState, int]],
                       anchors: List[LevelAnchor], rng: np.random.Generator) -> DecompositionSample:
    counts = rng.poisson(table.rates).astype(np.int64)
    shift = plan.domination_shift()
    extras: List[BitIndex] = []

    for _, state, anchor_code in steps:
        for _ in range(shift):
            lifted = lift_point(code_to_bits(anchor_code, state.width), state.k, state.chain, table, rng)
            counts[bits_to_code(lifted)] += 1
            extras.append(lifted)

    return DecompositionSample(table.n, anchors, extras, counts)


def decompose_many(table: RateTable, constraints: ConstraintFamily, rng: np.random.Generator,
                   count: int, mode: Mode = "exact-conditional") -> Tuple[np.ndarray, np.ndarray]:
    """``count`` decomposition samples as a ``(count, 2^n)`` array plus their ``kappa`` values."""
    plan = DecompositionPlan(table, constraints) if not constraints.is_empty() else None
    samples = np.zeros((count, table.size), dtype=np.int64)
    kappas = np.zeros(count, dtype=np.int64)

    for index in range(count):
        sample = decompose(table, constraints, rng, mode, plan)
        samples[index] = sample.counts
        kappas[index] = sample.kappa

    return samples, kappas


def anchors_decrease(sample: DecompositionSample) -> bool:
    """Each anchor, projected onto the next anchor's level, lies strictly above it."""
    for previous, current in zip(sample.anchors, sample.anchors[1:]):
        drop = current.offset - previous.offset
        if bits_to_code(previous.bits[drop:]) <= bits_to_code(current.bits):
            return False
    return True
