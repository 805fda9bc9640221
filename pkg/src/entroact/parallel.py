"""Order-preserving process map.

Results come back in input order and every task is a pure function of its
input, so the output does not depend on the number of workers.
"""

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor

_TASK = None


def _call(i):
    fn, items = _TASK
    return fn(items[i])


def pmap(fn, items, workers=1):
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    global _TASK
    _TASK = (fn, items)
    try:
        # fork shares fn and items with the children without pickling them
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=min(workers, len(items)), mp_context=ctx) as ex:
            return list(ex.map(_call, range(len(items))))
    finally:
        _TASK = None
