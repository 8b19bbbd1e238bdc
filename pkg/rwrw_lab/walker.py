from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from rwrw_lab.errors import ErrInvariant, ErrUsage
from rwrw_lab.filesystem import write_csv
from rwrw_lab.kernels import JumpKernel, LatticeVector, range_set
from rwrw_lab.occupancy import OccupancyOracle, occupancy


class WalkerConfig:
    def __init__(self, alpha0: JumpKernel, alpha1: JumpKernel) -> None:
        if alpha0.d != alpha1.d:
            raise ErrUsage(f"walker kernels live in dimensions {alpha0.d} and {alpha1.d}")
        self.alpha0 = alpha0
        self.alpha1 = alpha1
        self.d = alpha0.d

    def kernel(self, bit: int) -> JumpKernel:
        if bit not in (0, 1):
            raise ErrUsage(f"occupancy bit must be 0 or 1, got {bit}")
        return self.alpha1 if bit else self.alpha0

    def range_set(self) -> List[LatticeVector]:
        return range_set(self.alpha0, self.alpha1)

    @property
    def range(self) -> int:
        return max(self.alpha0.range, self.alpha1.range)

    def is_environment_blind(self) -> bool:
        return self.alpha0 == self.alpha1


class LocalEnvStep:
    def __init__(self, bit: int, jump: LatticeVector) -> None:
        self.bit = bit
        self.jump = jump

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LocalEnvStep):
            return NotImplemented
        return self.bit == other.bit and self.jump == other.jump

    def __repr__(self) -> str:
        return f"LocalEnvStep(bit={self.bit}, jump={self.jump})"


class JumpNoise:
    """Pre-drawn increments ``W0[t] ~ alpha0`` and ``W1[t] ~ alpha1``; the jump at ``t`` is ``W_bit[t]``."""

    def __init__(self, w0: np.ndarray, w1: np.ndarray) -> None:
        if w0.shape != w1.shape:
            raise ErrUsage("noise sequences must have the same shape")
        self.w0 = w0
        self.w1 = w1

    @classmethod
    def sample(cls, walker_config: WalkerConfig, steps: int, rng: np.random.Generator) -> 'JumpNoise':
        return JumpNoise(walker_config.alpha0.sample(rng, steps), walker_config.alpha1.sample(rng, steps))

    @property
    def steps(self) -> int:
        return len(self.w0)

    def jump(self, t: int, bit: int) -> np.ndarray:
        return self.w1[t] if bit else self.w0[t]


class WalkerRun:
    def __init__(self, positions: np.ndarray, bits: np.ndarray, jumps: np.ndarray) -> None:
        self.positions = positions
        self.bits = bits
        self.jumps = jumps

    @property
    def steps(self) -> int:
        return len(self.bits)

    def local_steps(self) -> List[LocalEnvStep]:
        return [LocalEnvStep(int(bit), tuple(int(value) for value in jump)) for bit, jump in zip(self.bits, self.jumps)]

    def csv_header(self) -> List[str]:
        d = self.positions.shape[1]
        return ["t"] + [f"x{i + 1}" for i in range(d)] + ["bit"] + [f"jump{i + 1}" for i in range(d)]

    def csv_rows(self) -> Iterator[List[int]]:
        for t in range(self.steps):
            yield [t] + self.positions[t].tolist() + [int(self.bits[t])] + self.jumps[t].tolist()

    def save_to_csv(self, file: Path) -> Path:
        return write_csv(file, self.csv_header(), self.csv_rows())


def step(position: Sequence[int], bit: int, walker_config: WalkerConfig, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(position, dtype=np.int64) + walker_config.kernel(bit).sample(rng, 1)[0]


def run_quenched(oracle: OccupancyOracle, walker_config: WalkerConfig, T: int, rng: np.random.Generator,
                 noise: Optional[JumpNoise] = None) -> WalkerRun:
    """Alternate ``bit = omega_t(X_t)`` and a jump from ``alpha(bit, .)`` for ``t = 0 .. T-1``."""
    if T < 0:
        raise ErrUsage(f"cannot run for {T} steps")
    if oracle.engine == "lazy" and oracle.query_times and oracle.query_times[-1] >= 0:
        raise ErrUsage("the oracle has already answered queries at nonnegative times")

    if noise is not None and noise.steps < T:
        raise ErrUsage(f"{noise.steps} pre-drawn jumps for a run of {T} steps")

    d = walker_config.d
    positions = np.zeros((T + 1, d), dtype=np.int64)
    bits = np.zeros(T, dtype=np.int64)
    jumps = np.zeros((T, d), dtype=np.int64)

    for t in range(T):
        bit, _ = occupancy(oracle, positions[t], t)
        if noise is None:
            jump = step(positions[t], bit, walker_config, rng) - positions[t]
        else:
            jump = noise.jump(t, bit)
        if walker_config.kernel(bit).probability_of(jump) <= 0:
            raise ErrInvariant(f"jump {tuple(jump)} at t = {t} is outside the support of alpha({bit}, .)")
        bits[t] = bit
        jumps[t] = jump
        positions[t + 1] = positions[t] + jump

    if not np.array_equal(positions[1:], np.cumsum(jumps, axis=0)):
        raise ErrInvariant("walker positions differ from the running sum of its jumps")
    return WalkerRun(positions, bits, jumps)


def plain_walk_positions(kernel: JumpKernel, times: Sequence[int], reps: int, rng: np.random.Generator) -> np.ndarray:
    """Positions of ``reps`` i.i.d. ``kernel`` walks at the given times, shape ``(reps, len(times), d)``."""
    times = list(times)
    horizon = max(times) if times else 0
    positions = np.zeros((reps, len(times), kernel.d), dtype=np.int64)
    current = np.zeros((reps, kernel.d), dtype=np.int64)
    done = 0

    # Chunked in time so memory stays bounded.
    chunk = max(1, min(256, (1 << 24) // max(1, reps * kernel.d)))
    wanted = {time: index for index, time in enumerate(times)}
    if 0 in wanted:
        positions[:, wanted[0]] = current
    while done < horizon:
        length = min(chunk, horizon - done)
        increments = kernel.sample(rng, reps * length).reshape(reps, length, kernel.d)
        partial = current[:, None, :] + np.cumsum(increments, axis=1)
        for offset in range(length):
            time = done + offset + 1
            if time in wanted:
                positions[:, wanted[time]] = partial[:, offset]
        current = partial[:, -1]
        done += length

    return positions


def positions_at(run: WalkerRun, times: Sequence[int]) -> np.ndarray:
    return run.positions[list(times)]


def xi_window(run: WalkerRun, start: int, end: int) -> Tuple[np.ndarray, np.ndarray]:
    """Bits and jumps for ``t`` in ``[start, end)``."""
    return run.bits[start:end], run.jumps[start:end]
