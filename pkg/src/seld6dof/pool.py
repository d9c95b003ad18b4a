"""Bounded process-pool mapping that preserves input order.

Scene rendering and featurization are embarrassingly parallel; each job is
deterministic given its argument, so running with workers produces the same
results as running serially, in the same order.
"""

import itertools
from collections import deque

_SENTINEL = object()


def ordered_map(fn, items, jobs=1):
    """Yield fn(item) for each item, optionally via a worker pool.

    At most jobs+1 results are in flight at once, which bounds memory when
    the results are large (rendered scenes carry full waveforms).
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        for x in items:
            yield fn(x)
        return
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        it = iter(items)
        pending = deque(ex.submit(fn, x)
                        for x in itertools.islice(it, jobs + 1))
        while pending:
            fut = pending.popleft()
            nxt = next(it, _SENTINEL)
            if nxt is not _SENTINEL:
                pending.append(ex.submit(fn, nxt))
            yield fut.result()
