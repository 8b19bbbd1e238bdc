"""Reproducible random streams derived from one master seed.

Replica block ``b`` of batch ``k`` uses spawn key ``(0, k, b)``; the shared noise of coupled
pair ``p`` uses ``(1, p)``. Keys depend on replica blocks, never on workers.
"""

import os
from typing import Dict, List, Optional, Tuple

import numpy as np

from rwrw_lab.constants import DEFAULT_SEED, SEED_ENVIRONMENT_VARIABLE
from rwrw_lab.errors import ErrConfig, ErrUsage

REPLICA_STREAM = 0
SHARED_NOISE_STREAM = 1


class StreamDescriptor:
    def __init__(self, master_seed: int, spawn_key: Tuple[int, ...]) -> None:
        self.master_seed = master_seed
        self.spawn_key = spawn_key

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.master_seed, spawn_key=self.spawn_key))

    @property
    def stream_id(self) -> str:
        return f"{self.master_seed}/" + ".".join(str(part) for part in self.spawn_key)

    def to_dict(self) -> Dict[str, object]:
        return {"masterSeed": self.master_seed, "spawnKey": list(self.spawn_key)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StreamDescriptor):
            return NotImplemented
        return self.master_seed == other.master_seed and self.spawn_key == other.spawn_key

    def __hash__(self) -> int:
        return hash((self.master_seed, self.spawn_key))


def seed_streams(master_seed: int, count: int) -> List[StreamDescriptor]:
    if count < 1:
        raise ErrUsage(f"need at least one stream, got {count}")
    return [StreamDescriptor(master_seed, (REPLICA_STREAM, index)) for index in range(count)]


def replica_stream(master_seed: int, batch: int, block: int) -> StreamDescriptor:
    return StreamDescriptor(master_seed, (REPLICA_STREAM, batch, block))


def shared_noise_stream(master_seed: int, pair: int) -> StreamDescriptor:
    return StreamDescriptor(master_seed, (SHARED_NOISE_STREAM, pair))


def resolve_master_seed(cli_seed: Optional[int], config_seed: Optional[int]) -> int:
    """Command line, then configuration file, then the environment variable, then the default."""
    if cli_seed is not None:
        return cli_seed
    if config_seed is not None:
        return config_seed

    from_environment = os.environ.get(SEED_ENVIRONMENT_VARIABLE)
    if from_environment:
        try:
            return int(from_environment)
        except ValueError:
            raise ErrConfig(f"{SEED_ENVIRONMENT_VARIABLE} is not an integer: [{from_environment}]", key=SEED_ENVIRONMENT_VARIABLE)
    return DEFAULT_SEED
