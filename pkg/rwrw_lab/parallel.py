import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Union

import numpy as np

from rwrw_lab.constants import DEFAULT_BLOCKS, DEFAULT_WORKERS
from rwrw_lab.errors import ErrUsage
from rwrw_lab.streams import StreamDescriptor, replica_stream

# A block function receives (replicas in the block, its generator, *args).
BlockFunction = Callable[..., Any]


class ReplicaPool:
    """Runs replicas in a fixed number of seeded blocks on a bounded process pool.

    Results come back in block order, so they do not depend on the worker count. Every call
    to ``run`` consumes a new batch index, giving independent streams to successive batches.
    """

    def __init__(self, master_seed: int, blocks: int = DEFAULT_BLOCKS, workers: int = DEFAULT_WORKERS) -> None:
        if blocks < 1:
            raise ErrUsage(f"need at least one replica block, got {blocks}")
        if workers < 1:
            raise ErrUsage(f"need at least one worker, got {workers}")
        self.master_seed = master_seed
        self.blocks = blocks
        self.workers = workers
        self.batches = 0
        self.used_streams: List[StreamDescriptor] = []

    def block_sizes(self, reps: int) -> List[int]:
        if reps < 0:
            raise ErrUsage(f"negative replica count {reps}")
        blocks = max(1, min(self.blocks, reps))
        base, extra = divmod(reps, blocks)
        return [base + (1 if block < extra else 0) for block in range(blocks)]

    def run(self, function: BlockFunction, reps: int, *args: Any) -> List[Any]:
        batch = self.batches
        self.batches += 1
        sizes = self.block_sizes(reps)
        descriptors = [replica_stream(self.master_seed, batch, block) for block in range(len(sizes))]
        self.used_streams.extend(descriptors)
        start = time.time()

        if self.workers == 1:
            results = []
            for block, (size, descriptor) in enumerate(zip(sizes, descriptors)):
                results.append(function(size, descriptor.generator(), *args))
                logging.debug(f"Batch {batch}: block {block + 1}/{len(sizes)} done")
        else:
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                futures = [executor.submit(_run_block, function, size, descriptor, args) for size, descriptor in zip(sizes, descriptors)]
                results = []
                for block, future in enumerate(futures):
                    results.append(future.result())
                    logging.debug(f"Batch {batch}: block {block + 1}/{len(sizes)} done")

        logging.info(f"Batch {batch}: {reps} replicas in {len(sizes)} blocks on {self.workers} worker(s), {time.time() - start:.1f} s")
        return results


def _run_block(function: BlockFunction, size: int, descriptor: StreamDescriptor, args: tuple) -> Any:
    return function(size, descriptor.generator(), *args)


RandomSource = Union[np.random.Generator, ReplicaPool]


def replicate(source: RandomSource, function: BlockFunction, reps: int, *args: Any) -> List[Any]:
    """Block results from a pool, or a single block drawn from a plain generator."""
    if isinstance(source, ReplicaPool):
        return source.run(function, reps, *args)
    return [function(reps, source, *args)]


def generator_of(source: RandomSource) -> np.random.Generator:
    """A generator for serial work next to replicated batches."""
    if isinstance(source, ReplicaPool):
        descriptor = replica_stream(source.master_seed, source.batches, 0)
        source.batches += 1
        source.used_streams.append(descriptor)
        return descriptor.generator()
    return source
