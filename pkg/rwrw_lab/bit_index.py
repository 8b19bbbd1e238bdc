"""Bit-indexed Poisson rate tables and "at least one point" constraint families.

A bit index ``x`` in ``{0,1}^n`` is a tuple of ints; position ``i`` (1-based) is ``x[i-1]``.
Internally an index is encoded as the integer whose most significant bit is position 1,
so integer order coincides with the standard lexicographic order.
"""

import math
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Literal, Sequence, Tuple

import numpy as np

from rwrw_lab.errors import ErrConfig, ErrDomain, ErrUsage

BitIndex = Tuple[int, ...]
Ordering = Literal["less", "equal", "greater"]


def lex_compare(x: Sequence[int], y: Sequence[int]) -> Ordering:
    if len(x) != len(y):
        raise ErrUsage(f"cannot compare bit indices of lengths {len(x)} and {len(y)}")

    for a, b in zip(x, y):
        if a != b:
            return "less" if a < b else "greater"
    return "equal"


def bits_to_code(bits: Sequence[int]) -> int:
    code = 0
    for bit in bits:
        if bit not in (0, 1):
            raise ErrUsage(f"not a bit: {bit}")
        code = (code << 1) | int(bit)
    return code


def code_to_bits(code: int, n: int) -> BitIndex:
    return tuple((code >> (n - position)) & 1 for position in range(1, n + 1))


def parse_bits(text: str) -> BitIndex:
    text = text.strip()
    if not text or any(char not in "01" for char in text):
        raise ErrUsage(f"not a bit string: [{text}]")
    return tuple(int(char) for char in text)


def format_bits(bits: Sequence[int]) -> str:
    return "".join(str(int(bit)) for bit in bits)


def position_mask(n: int, position: int) -> np.ndarray:
    """Boolean mask over all codes of ``{0,1}^n`` selecting ``x(position) = 1``."""
    codes = np.arange(1 << n)
    return ((codes >> (n - position)) & 1).astype(bool)


class RateTable:
    def __init__(self, n: int, rates: Sequence[float]) -> None:
        if n < 1:
            raise ErrUsage("the index space {0,1}^n needs n >= 1")

        values = np.asarray(rates, dtype=float)
        if values.shape != (1 << n,):
            raise ErrUsage(f"a rate table over {{0,1}}^{n} needs {1 << n} rates, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ErrDomain("rates must be finite")
        if np.any(values < 0):
            raise ErrDomain("rates must be nonnegative")

        self.n = n
        self.rates = values

    @classmethod
    def from_mapping(cls, n: int, mapping: Dict[BitIndex, float]) -> 'RateTable':
        rates = np.zeros(1 << n)
        for bits, rate in mapping.items():
            if len(bits) != n:
                raise ErrUsage(f"bit index {format_bits(bits)} does not have length {n}")
            rates[bits_to_code(bits)] = rate
        return RateTable(n, rates)

    @classmethod
    def uniform(cls, n: int, rate: float) -> 'RateTable':
        return RateTable(n, np.full(1 << n, float(rate)))

    @property
    def size(self) -> int:
        return 1 << self.n

    def rate(self, bits: Sequence[int]) -> float:
        if len(bits) != self.n:
            raise ErrUsage(f"bit index of length {len(bits)} used on a table over {{0,1}}^{self.n}")
        return float(self.rates[bits_to_code(bits)])

    def max_rate(self) -> float:
        return float(self.rates.max())

    def total(self) -> float:
        return float(self.rates.sum())

    def indices(self) -> List[BitIndex]:
        return [code_to_bits(code, self.n) for code in range(self.size)]

    def to_dict(self) -> Dict[str, float]:
        return {format_bits(bits): float(self.rates[code]) for code, bits in enumerate(self.indices())}


class ConstraintFamily:
    """Constraints ``C_i = {x : x(i) = 1}`` for the constrained positions ``O``."""

    def __init__(self, n: int, positions: Iterable[int]) -> None:
        positions = frozenset(int(position) for position in positions)
        if n < 1:
            raise ErrUsage("the index space {0,1}^n needs n >= 1")
        for position in positions:
            if not 1 <= position <= n:
                raise ErrUsage(f"constraint position {position} outside 1..{n}")

        self.n = n
        self.positions: FrozenSet[int] = positions

    def is_empty(self) -> bool:
        return len(self.positions) == 0

    def sorted_positions(self) -> List[int]:
        return sorted(self.positions)

    def constraint_mask(self, position: int) -> np.ndarray:
        return position_mask(self.n, position)

    def relevant_mask(self) -> np.ndarray:
        """Membership mask of ``M``, the union of all constraint sets."""
        mask = np.zeros(1 << self.n, dtype=bool)
        for position in self.positions:
            mask |= position_mask(self.n, position)
        return mask

    def satisfied_by(self, counts: np.ndarray) -> bool:
        counts = np.asarray(counts)
        return all(counts[self.constraint_mask(position)].sum() > 0 for position in self.positions)

    def check_feasible(self, table: RateTable):
        if table.n != self.n:
            raise ErrUsage(f"constraints over {{0,1}}^{self.n} used with a rate table over {{0,1}}^{table.n}")

        for position in self.sorted_positions():
            mass = table.rates[self.constraint_mask(position)].sum()
            if mass <= 0:
                raise ErrDomain(f"constraint at position {position} cannot be satisfied: its rates sum to zero")


def load_instance(path: Path) -> Tuple[RateTable, ConstraintFamily]:
    with open(path) as file:
        return parse_instance(file.read())


def parse_instance(text: str) -> Tuple[RateTable, ConstraintFamily]:
    """Parse ``bits=<01 string> rate=<decimal>`` lines plus one ``O=<comma list>`` line."""
    mapping: Dict[BitIndex, float] = dict()
    positions: List[int] = []
    n = 0

    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#")[0].strip()
        if not line:
            continue

        if line.startswith("O="):
            body = line[2:].strip()
            try:
                positions = [int(item) for item in body.split(",") if item.strip()]
            except ValueError:
                raise ErrConfig(f"bad constraint list [{body}]", key="O", line=line_number)
            continue

        fields = dict(item.split("=", 1) for item in line.split() if "=" in item)
        if "bits" not in fields or "rate" not in fields:
            raise ErrConfig(f"expected 'bits=... rate=...', got [{line}]", line=line_number)

        try:
            bits = parse_bits(fields["bits"])
            rate = float(fields["rate"])
        except (ErrUsage, ValueError) as err:
            raise ErrConfig(str(err), key="bits", line=line_number)

        if n and len(bits) != n:
            raise ErrConfig(f"bit string length {len(bits)} differs from {n}", key="bits", line=line_number)
        n = len(bits)
        mapping[bits] = rate

    if n == 0:
        raise ErrConfig("instance has no rate lines")

    return RateTable.from_mapping(n, mapping), ConstraintFamily(n, positions)


def format_instance(table: RateTable, constraints: ConstraintFamily) -> str:
    lines = [f"bits={bits} rate={rate!r}" for bits, rate in table.to_dict().items()]
    lines.append("O=" + ",".join(str(position) for position in constraints.sorted_positions()))
    return "\n".join(lines) + "\n"


def poisson_upper_tail_bound(rate: float, cap: int) -> float:
    """Bound on ``P(Poi(rate) > cap)``: the first omitted term times a geometric correction."""
    if rate <= 0:
        return 0.0
    first = math.exp(-rate + (cap + 1) * math.log(rate) - math.lgamma(cap + 2))
    ratio = rate / (cap + 2)
    if ratio >= 1:
        return 1.0
    return min(1.0, first / (1 - ratio))
