import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def worker_count() -> int:
    """Thread cap from ``SMALLCOST_THREADS`` (default: CPU count)."""
    raw = os.environ.get("SMALLCOST_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def batch_map(fn, seed: int, n_items: int, batch_size: int):
    """Apply ``fn(rng, count)`` to fixed-size batches with spawned seeds.

    The partition into batches, and so the result list, depends only on
    ``(seed, n_items, batch_size)``, never on the number of threads.
    """
    counts = [min(batch_size, n_items - k) for k in range(0, n_items, batch_size)]
    seeds = np.random.SeedSequence(seed).spawn(len(counts))
    jobs = [(np.random.default_rng(s), c) for s, c in zip(seeds, counts)]
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(rng, c) for rng, c in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
