"""Process-wide execution settings.

Results never depend on the thread count: block partial sums are always
combined in block order, threads only evaluate blocks concurrently.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_BLOCK = 8192

_threads = None


def get_threads() -> int:
    global _threads
    if _threads is None:
        env = os.environ.get("MRWS_THREADS", "1")
        try:
            _threads = max(1, int(env))
        except ValueError:
            _threads = 1
    return _threads


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def blocked_sum(values) -> float:
    """Deterministic sum of a 1-D array in fixed-size blocks.

    The block partials are combined in block order regardless of how many
    threads evaluated them, so `--threads N` reproduces `--threads 1` bitwise.
    """
    n = len(values)
    if n == 0:
        return 0.0
    bounds = range(0, n, _BLOCK)
    workers = get_threads()
    if workers > 1 and n > _BLOCK:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda i: float(values[i:i + _BLOCK].sum()), bounds))
    else:
        partials = [float(values[i:i + _BLOCK].sum()) for i in bounds]
    total = 0.0
    for part in partials:
        total += part
    return total
