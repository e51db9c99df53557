"""Worker-pool helper honoring the RS_THREADS environment variable.

All call sites reduce their results with order-independent operations
(min with a total tie-break, or collection in submission order), so the
worker count never changes any output, only wall-clock time.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    """Number of workers to use; RS_THREADS caps (and sets) it."""
    raw = os.environ.get("RS_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """map() over items, in submission order, on worker_count() threads."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
