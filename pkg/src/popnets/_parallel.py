"""Deterministic process-parallel map.

Results are assembled in task order regardless of worker count, so outputs
are bit-identical for any ``workers`` value; the per-item computation is the
same function either way.  BLAS pools are capped at one thread for the
duration of a map: the workload is many small matrices, where threaded
kernels only add spin-wait contention, and a fixed thread count keeps the
numerics identical across configurations.  Workers are forked while the cap
is in force and inherit it.
"""

from __future__ import annotations

import contextlib
import multiprocessing
from typing import Any, Callable, Sequence

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - threadpoolctl ships with scipy stacks
    def threadpool_limits(limits=None):
        return contextlib.nullcontext()

_PAYLOAD: Any = None
_FN: Callable | None = None


def _init(fn, payload) -> None:
    global _PAYLOAD, _FN
    _FN = fn
    _PAYLOAD = payload


def _run(item):
    return _FN(_PAYLOAD, item)


def parallel_map(fn: Callable, payload, items: Sequence, workers: int) -> list:
    """Apply ``fn(payload, item)`` to every item, in order.

    ``workers <= 1`` runs serially in-process.  Larger values use a forked
    process pool; ``payload`` is shared with workers through fork inheritance.
    """
    items = list(items)
    with threadpool_limits(limits=1):
        if workers <= 1 or len(items) <= 1:
            return [fn(payload, item) for item in items]
        ctx = multiprocessing.get_context("fork")
        chunksize = max(1, len(items) // (4 * workers))
        with ctx.Pool(processes=workers, initializer=_init, initargs=(fn, payload)) as pool:
            return pool.map(_run, items, chunksize=chunksize)
