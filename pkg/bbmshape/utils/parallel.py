"""
Worker pool and reproducible random streams
"""

import concurrent.futures
import logging
from collections.abc import Callable, Iterable, Sequence
from typing import Any

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """
    Generator for one block of replicas.

    The stream is keyed on (seed, stream, block) only, so results do not
    depend on how blocks are scheduled over workers.

    Args:
        seed: Experiment seed
        stream: Estimator-specific stream id
        block: Replica block index

    Returns:
        Independent numpy Generator
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.default_rng(sequence)


def replica_blocks(reps: int, block_size: int) -> list[tuple[int, int]]:
    """Split reps into (block index, replicas in block) pairs."""
    blocks = []
    start = 0
    index = 0
    while start < reps:
        size = min(block_size, reps - start)
        blocks.append((index, size))
        start += size
        index += 1
    return blocks


def run_blocks(
    fn: Callable[..., Any],
    tasks: Sequence[Any] | Iterable[Any],
    threads: int = 1,
    desc: str | None = None,
    progress: bool = False,
) -> list[Any]:
    """
    Map fn over tasks, preserving task order.

    Args:
        fn: Picklable top-level function taking one task
        tasks: Task arguments
        threads: Worker processes; <= 1 runs in-process
        desc: Progress bar label
        progress: Show a tqdm progress bar

    Returns:
        Results in task order
    """
    task_list = list(tasks)
    if threads <= 1 or len(task_list) <= 1:
        iterator = tqdm(task_list, desc=desc, disable=not progress)
        return [fn(task) for task in iterator]

    logger.debug(f"Running {len(task_list)} tasks on {threads} workers")
    results: list[Any] = [None] * len(task_list)
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(fn, task): i for i, task in enumerate(task_list)}
        pbar = tqdm(total=len(task_list), desc=desc, disable=not progress)
        try:
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
                pbar.update(1)
        finally:
            pbar.close()
    return results
